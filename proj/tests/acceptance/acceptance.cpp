// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "flame/estimator_store.hpp"
#include "flame/governor.hpp"
#include "flame/io.hpp"
#include "flame/layerfit.hpp"
#include "flame/modelest.hpp"
#include "flame/serialization.hpp"
#include "flame_cli/cli.hpp"
#include "oracles/event_timeline.hpp"
#include "synthetic.hpp"

using namespace flame;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double got, double want) {
  if (want == 0.0) return std::abs(got);
  return std::abs(got - want) / std::abs(want);
}

// Sum of measured latency over [from, to) against the sum of deadlines.
bool rate_met(const governor::GovernTrace& t, std::size_t from, std::size_t to) {
  double meas = 0.0, budget = 0.0;
  for (std::size_t i = from; i < to && i < t.rows.size(); ++i) {
    meas += t.rows[i].meas_ms;
    budget += t.rows[i].deadline_ms;
  }
  return meas <= budget;
}

double window_qos(const governor::GovernTrace& t, std::size_t from, std::size_t to) {
  double meas = 0.0, budget = 0.0;
  for (std::size_t i = from; i < to && i < t.rows.size(); ++i) {
    meas += t.rows[i].meas_ms;
    budget += t.rows[i].deadline_ms;
  }
  return governor::qos(1.0 / meas, 1.0 / budget);
}

layerfit::EstimatorStore fit_store(const devicesim::DeviceConfig& device, const ModelSpec& spec,
                                   const profiler::SamplingPlan& plan, std::uint64_t seed) {
  return layerfit::fit_estimator_store(
      testing::profile(device, testing::distinct_layers(spec), plan, seed));
}

Outcome exact_recovery() {
  const auto device = testing::noiseless(devicesim::make_device(1));
  const auto dnn = testing::standard_dnn();
  const auto slm = testing::standard_slm();
  auto configs = testing::distinct_layers(dnn);
  for (const auto& l : testing::distinct_layers(slm)) configs.push_back(l);
  const auto ds = testing::profile(device, configs, testing::stride_plan(1), 1);
  const auto store = layerfit::fit_estimator_store(ds);

  double worst_coeff = 0.0;
  std::size_t checked = 0;
  for (auto type : kAllLayerTypes) {
    for (const auto& cfg : ds.configs(type)) {
      const auto fitted = layerfit::flatten(store.at(type).coefficients_for(cfg));
      const auto truth = layerfit::flatten(devicesim::generate_ground_truth(cfg, device));
      for (std::size_t i = 0; i < fitted.size(); ++i) {
        worst_coeff = std::max(worst_coeff, rel_err(fitted[i], truth[i]));
      }
      ++checked;
    }
  }

  devicesim::DeviceSimulator sim(device, 0);
  modelest::ModelEstimator est(store);
  double worst_total = 0.0;
  std::vector<ModelSpec> specs{dnn};
  for (auto ctx : profiler::context_points(ds.plan)) specs.push_back(slm.with_context(ctx));
  for (const auto& spec : specs) {
    for (const auto& [c, g] : device.grid.pairs()) {
      worst_total = std::max(worst_total, std::abs(est.total_ms(spec, c, g) -
                                                   sim.noiseless_total_ms(spec, c, g)));
    }
  }
  return {worst_coeff <= 1e-6 && worst_total <= 1e-6,
          fmt("%zu layers, worst coefficient rel err %.2e, worst model total err %.2e ms",
              checked, worst_coeff, worst_total)};
}

Outcome sparse_accuracy() {
  const auto device = devicesim::make_device(1);
  const auto dnn = testing::standard_dnn();
  const double dnn_mape = testing::grid_mape(fit_store(device, dnn, testing::stride_plan(4), 2), device, dnn);

  const auto slm = testing::standard_slm();
  const auto store = fit_store(device, slm, testing::stride_plan(4), 3);
  devicesim::DeviceSimulator truth(testing::noiseless(device), 0);
  modelest::ModelEstimator est(store);
  double worst = 0.0, sum = 0.0;
  for (std::int64_t ctx = 1; ctx <= 1024; ++ctx) {
    const auto spec = slm.with_context(ctx);
    std::vector<double> y, yhat;
    for (const auto& [c, g] : device.grid.pairs()) {
      y.push_back(truth.noiseless_total_ms(spec, c, g));
      yhat.push_back(est.total_ms(spec, c, g));
    }
    const double m = governor::mape(y, yhat);
    worst = std::max(worst, m);
    sum += m;
  }
  return {dnn_mape <= 8.0 && worst <= 8.0,
          fmt("DNN MAPE %.2f%%, transformer per-token MAPE mean %.2f%% worst %.2f%% (bound 8%%)",
              dnn_mape, sum / 1024.0, worst)};
}

Outcome timeline_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 64);
  std::uniform_real_distribution<double> dur(0.0, 5.0), gap(-4.0, 4.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    std::vector<modelest::LayerTiming> layers(static_cast<std::size_t>(len(rng)));
    std::vector<oracle::LayerInput> in;
    for (auto& l : layers) {
      l = {dur(rng), dur(rng), gap(rng)};
      in.push_back({l.cpu_ms, l.gpu_ms, l.delta_ms});
    }
    worst = std::max(worst, std::abs(modelest::reconstruct_timeline(layers).total_ms -
                                     oracle::replay(in).total_ms));
  }
  return {worst <= 1e-9, fmt("10000 sequences, worst |total - oracle| %.2e ms", worst)};
}

Outcome breakpoint_recovery() {
  int ok = 0;
  for (int i = 0; i < 200; ++i) {
    const auto device = devicesim::make_device(1000 + i);
    std::mt19937_64 r(i);
    const LayerConfig cfg =
        (i % 2) ? make_convolution(28 + r() % 60, 28 + r() % 60, 16 << (r() % 4), 16 << (r() % 4), 3, 1)
                : make_linear(128 + r() % 4000, 128 + r() % 4000);
    auto plan = testing::stride_plan(1);
    plan.gpu_stride = 4;
    const auto ds = testing::profile(device, {cfg}, plan, i);
    std::vector<layerfit::DeltaPoint> pts;
    for (const auto& s : ds.samples) pts.push_back({s.f_c, s.f_g, s.delta_ms});
    const auto found = layerfit::detect_breakpoint(pts, device.grid.cpu_levels()).breakpoint;
    const auto truth = devicesim::generate_ground_truth(cfg, device).breakpoint;
    const auto a = static_cast<long>(*device.grid.cpu_index(found));
    const auto b = static_cast<long>(*device.grid.cpu_index(truth));
    if (std::abs(a - b) <= 1) ++ok;
  }
  return {ok >= 190, fmt("%d/200 within one CPU level (need 190)", ok)};
}

Outcome governor_optimality() {
  int match = 0, calls_ok = 0, complete = 0;
  for (int i = 0; i < 500; ++i) {
    const auto device = devicesim::make_device(5000 + i);
    const auto spec = testing::random_dnn(i, 4 + i % 8);
    const auto store = fit_store(device, spec, testing::stride_plan(4), i);
    modelest::ModelEstimator est(store);
    const governor::LatencyEstimator f = [&](Frequency c, Frequency g) { return est.total_ms(spec, c, g); };
    const double lo = f(device.grid.cpu_max(), device.grid.gpu_max());
    const double hi = f(device.grid.cpu_min(), device.grid.gpu_min());
    std::mt19937_64 r(i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const governor::Deadline d(lo * 0.9 + u(r) * (hi * 1.05 - lo * 0.9));
    const auto g = governor::greedy_search(f, device.grid, d, device.power);
    const auto o = governor::oracle_search(f, device.grid, device.power, d);
    if (g.f_c == o.f_c && g.f_g == o.f_g && g.feasible == o.feasible) ++match;
    if (g.estimator_calls <= device.grid.cpu_levels().size() + device.grid.gpu_levels().size()) ++calls_ok;
    bool pinned = false;
    for (const auto& level : device.grid.gpu_levels()) pinned |= f(device.grid.cpu_max(), level) <= d.ms();
    if (!pinned || g.feasible) ++complete;
  }
  return {match >= 450 && calls_ok == 500 && complete == 500,
          fmt("matches oracle %d/500 (need 450), call bound %d/500, pinned-CPU feasibility %d/500",
              match, calls_ok, complete)};
}

Outcome governor_efficiency() {
  bool pass = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto device = devicesim::make_device(seed);
    const auto spec = testing::standard_dnn();
    const auto store = fit_store(device, spec, testing::stride_plan(4), seed);
    devicesim::DeviceSimulator probe(device, 0);
    const double t_max = probe.noiseless_total_ms(spec, device.grid.cpu_max(), device.grid.gpu_max());
    governor::Scenario sc;
    sc.spec = spec;
    sc.deadlines = governor::DeadlineSchedule::constant(2.0 * t_max);
    sc.steps = 300;
    double ppw[2];
    for (int k = 0; k < 2; ++k) {
      sc.policy = k == 0 ? governor::Policy::kGreedy : governor::Policy::kMaxFrequency;
      devicesim::DeviceSimulator sim(device, seed);
      const auto trace = governor::govern_loop(store, sim, sc);
      ppw[k] = governor::evaluate_trace(trace.rows, sc.deadlines).ppw;
    }
    const double gain = 100.0 * (ppw[0] / ppw[1] - 1.0);
    pass = pass && gain >= 20.0;
    detail += fmt("%sdevice %llu: PPW %.2f vs %.2f (+%.1f%%)", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), ppw[0], ppw[1], gain);
  }
  return {pass, detail + " (need +20%)"};
}

Outcome adaptation_recovery() {
  const auto device = devicesim::make_device(1);
  const auto spec = testing::standard_dnn();
  const auto store = fit_store(device, spec, testing::stride_plan(4), 4);
  governor::Scenario sc;
  sc.spec = spec;
  sc.deadlines = governor::DeadlineSchedule::constant(12.0);
  sc.steps = 300;

  // Disturbance from step 100 onwards, adaptation on throughout.
  sc.disturbances = {{100, std::nullopt, 0.3}};
  devicesim::DeviceSimulator sim_on(device, 7);
  const auto on = governor::govern_loop(store, sim_on, sc);
  const bool restored = rate_met(on, 150, 200) && rate_met(on, 150, 300);

  // Disturbance over [100, 200), adaptation off.
  sc.disturbances = {{100, 200, 0.3}};
  sc.adaptation_enabled = false;
  devicesim::DeviceSimulator sim_off(device, 7);
  const auto off = governor::govern_loop(store, sim_off, sc);
  const double degraded = window_qos(off, 100, 200);

  return {on.complete && off.complete && restored && degraded < 100.0,
          fmt("adaptation on: QoS %.1f%% before, %.1f%% over steps 100-149, %.1f%% over 150-199; "
              "adaptation off: QoS %.1f%% while disturbed",
              window_qos(on, 0, 100), window_qos(on, 100, 150), window_qos(on, 150, 200), degraded)};
}

Outcome deadline_tracking() {
  const auto device = devicesim::make_device(1);
  const auto spec = testing::standard_dnn();
  const auto store = fit_store(device, spec, testing::stride_plan(4), 5);
  devicesim::DeviceSimulator probe(device, 0);
  const double t_max = probe.noiseless_total_ms(spec, device.grid.cpu_max(), device.grid.gpu_max());
  governor::Scenario sc;
  sc.spec = spec;
  sc.deadlines = governor::DeadlineSchedule{{{0, 20.0}, {250, 12.0}}};
  sc.steps = 500;
  devicesim::DeviceSimulator sim(device, 8);
  const auto trace = governor::govern_loop(store, sim, sc);
  std::size_t infeasible = 0;
  for (const auto& r : trace.rows) infeasible += r.feasible ? 0 : 1;
  const bool faster = trace.rows[250].power_w > trace.rows[249].power_w;
  const bool met = rate_met(trace, 251, 500);
  return {t_max <= 12.0 && trace.complete && infeasible == 0 && faster && met,
          fmt("(max,max) %.2f ms; power %.2f W -> %.2f W at the change; QoS after change %.1f%%; "
              "%zu infeasible steps",
              t_max, trace.rows[249].power_w, trace.rows[250].power_w, window_qos(trace, 251, 500),
              infeasible)};
}

Outcome sampling_robustness() {
  const auto device = devicesim::make_device(1);
  const auto dnn = testing::standard_dnn();
  const double dense = testing::grid_mape(fit_store(device, dnn, testing::stride_plan(1), 6), device, dnn);
  const double sparse = testing::grid_mape(fit_store(device, dnn, testing::stride_plan(4), 6), device, dnn);
  return {sparse - dense <= 3.0,
          fmt("MAPE stride 1 %.3f%%, stride 4 %.3f%%, growth %.3f points (bound 3)", dense, sparse,
              sparse - dense)};
}

std::string grid_estimates(const layerfit::EstimatorStore& store, const ModelSpec& spec) {
  modelest::ModelEstimator est(store);
  std::string out;
  for (const auto& [c, g] : store.grid.pairs()) out += io::format_double(est.total_ms(spec, c, g)) + '\n';
  return out;
}

Outcome round_trip() {
  const auto dir = fs::temp_directory_path() / "flame_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto device = devicesim::make_device(9);
  const auto spec = testing::standard_dnn();
  const auto ds = testing::profile(device, testing::distinct_layers(spec), testing::stride_plan(4), 9);
  profiler::save_dataset(ds, dir / "ds.csv");
  const auto store = layerfit::fit_estimator_store(profiler::load_dataset(dir / "ds.csv"));
  layerfit::save_estimator_store(store, dir / "est.json");
  const auto loaded = layerfit::load_estimator_store(dir / "est.json");
  const bool estimates_same = grid_estimates(store, spec) == grid_estimates(loaded, spec) &&
                              grid_estimates(layerfit::fit_estimator_store(ds), spec) ==
                                  grid_estimates(loaded, spec);

  io::write_file_atomic(dir / "spec.json", model_spec_to_json(spec));
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  bool commands_same = true;
  std::ostringstream sink;
  const auto p = [&](const std::string& name) { return (dir / name).string(); };
  std::vector<std::string> outputs[2];
  for (int k = 0; k < 2; ++k) {
    const std::string t = std::to_string(k);
    const std::vector<std::vector<std::string>> cmds = {
        {"gen-device", "--seed", "9", "--out", p("dev" + t + ".json")},
        {"profile", "--device", p("dev" + t + ".json"), "--model", p("spec.json"), "--seed", "3", "--out",
         p("ds" + t + ".csv")},
        {"fit", "--dataset", p("ds" + t + ".csv"), "--out", p("est" + t + ".json")},
        {"sweep", "--estimators", p("est" + t + ".json"), "--model", p("spec.json"), "--out",
         p("sweep" + t + ".csv")},
        {"govern", "--estimators", p("est" + t + ".json"), "--device", p("dev" + t + ".json"), "--model",
         p("spec.json"), "--deadline-ms", "15", "--steps", "100", "--seed", "4", "--out",
         p("trace" + t + ".csv")}};
    for (const auto& c : cmds) commands_same = commands_same && cli::run(c, sink, sink) == 0;
    for (const char* f : {"dev%.json", "ds%.csv", "ds%.meta.json", "est%.json", "sweep%.csv", "trace%.csv"}) {
      std::string name(f);
      name.replace(name.find('%'), 1, t);
      outputs[k].push_back(io::read_text_file(dir / name));
    }
  }
  ::unsetenv("SOURCE_DATE_EPOCH");
  commands_same = commands_same && outputs[0] == outputs[1];
  fs::remove_all(dir);
  return {estimates_same && commands_same,
          fmt("estimates after save/load %s; seeded CLI outputs %s", estimates_same ? "identical" : "DIFFER",
              commands_same ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"A1 exact recovery (30 s)", exact_recovery},
      {"A2 sparse-profile accuracy (5 min)", sparse_accuracy},
      {"A3 timeline vs event oracle (1 min)", timeline_oracle},
      {"A4 breakpoint detection", breakpoint_recovery},
      {"A5 governor optimality", governor_optimality},
      {"A6 governor efficiency", governor_efficiency},
      {"A7 adaptation recovery", adaptation_recovery},
      {"A8 deadline tracking", deadline_tracking},
      {"A9 sampling-interval robustness", sampling_robustness},
      {"A10 round trip and determinism", round_trip},
  };
  const double limits[] = {30.0, 300.0, 60.0};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (i < 3 && secs > limits[i]) {
      o.pass = false;
      o.detail += "; over time budget";
    }
    if (!o.pass) ++failures;
    std::printf("%s %-38s %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
