#include "flame_cli/cli.hpp"

#include <CLI11.hpp>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>

#include "flame/devicesim.hpp"
#include "flame/error.hpp"
#include "flame/estimator_store.hpp"
#include "flame/governor.hpp"
#include "flame/io.hpp"
#include "flame/modelest.hpp"
#include "flame/profiler.hpp"
#include "flame/serialization.hpp"

namespace flame::cli {

namespace {

namespace fs = std::filesystem;

constexpr const char* kUnits = "Units: frequencies in GHz, durations in ms, power in W.";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  bool verbose = false;

  void log(const std::string& msg) const {
    if (verbose) err << "flame: " << msg << '\n';
  }
};

// Relative output paths land under FLAME_DATA_DIR when it is set.
fs::path output_path(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv("FLAME_DATA_DIR"); root && *root) p = fs::path(root) / p;
  }
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
  return p;
}

void write_output(const Context& ctx, const std::string& path, const std::string& content) {
  const fs::path p = output_path(path);
  io::write_file_atomic(p, content);
  ctx.log("wrote " + p.string());
}

governor::DeadlineSchedule deadline_schedule(const std::optional<double>& deadline_ms,
                                             const std::string& schedule_path) {
  if (deadline_ms.has_value() == !schedule_path.empty()) {
    throw UsageError("give exactly one of --deadline-ms and --deadline-schedule");
  }
  if (deadline_ms) return governor::DeadlineSchedule::constant(*deadline_ms);
  return governor::load_deadline_schedule(schedule_path);
}

// "off@100,on@200"
std::vector<governor::AdaptationChange> parse_adapt_schedule(const std::string& text) {
  std::vector<governor::AdaptationChange> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto at = item.find('@');
    const std::string state = item.substr(0, at);
    if (at == std::string::npos || (state != "on" && state != "off")) {
      throw UsageError("adaptation schedule entries look like on@STEP or off@STEP");
    }
    governor::AdaptationChange c;
    c.enabled = state == "on";
    try {
      std::size_t used = 0;
      c.step = std::stoll(item.substr(at + 1), &used);
      if (used != item.size() - at - 1 || c.step < 0) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad adaptation step in \"" + item + "\"");
    }
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.step < b.step; });
  return out;
}

ModelSpec merged_models(const std::vector<std::string>& paths) {
  ModelSpec merged{"profile", {}};
  for (const auto& p : paths) {
    const ModelSpec spec = load_model_spec(p);
    merged.layers.insert(merged.layers.end(), spec.layers.begin(), spec.layers.end());
  }
  return merged;
}

std::string sweep_csv(const layerfit::EstimatorStore& store, const ModelSpec& spec,
                      const devicesim::DeviceConfig* device) {
  modelest::ModelEstimator est(store);
  std::optional<devicesim::DeviceSimulator> truth;
  if (device) {
    devicesim::DeviceConfig quiet = *device;
    quiet.jitter_sigma = 0.0;
    truth.emplace(quiet, 0);
  }
  std::string csv = device ? "f_c,f_g,estimate_ms,ground_truth_ms,err_pct\n" : "f_c,f_g,estimate_ms\n";
  for (const auto& [c, g] : store.grid.pairs()) {
    const double e = est.total_ms(spec, c, g);
    csv += io::format_double(c.ghz()) + ',' + io::format_double(g.ghz()) + ',' +
           io::format_double(e);
    if (truth) {
      const double t = truth->noiseless_total_ms(spec, c, g);
      csv += ',' + io::format_double(t) + ',' + io::format_double(100.0 * std::abs(e - t) / t);
    }
    csv += '\n';
  }
  return csv;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-aware latency estimation and deadline-driven DVFS on a simulated "
               "CPU-GPU device.",
               "flame"};
  app.footer(kUnits);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  Context ctx{out, err};
  app.add_flag("-v,--verbose", ctx.verbose, "Progress messages on stderr");

  std::function<void()> action;

  // gen-device
  auto* gen = app.add_subcommand("gen-device", "Create a simulated device description");
  gen->footer(kUnits);
  std::uint64_t gen_seed = 0;
  devicesim::DeviceOptions dev_opts;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "Device seed (required)")->required();
  gen->add_option("--cpu-levels", dev_opts.cpu_levels, "Number of CPU levels")->capture_default_str();
  gen->add_option("--gpu-levels", dev_opts.gpu_levels, "Number of GPU levels")->capture_default_str();
  gen->add_option("--cpu-min", dev_opts.cpu_min_ghz, "Lowest CPU frequency (GHz)")->capture_default_str();
  gen->add_option("--cpu-max", dev_opts.cpu_max_ghz, "Highest CPU frequency (GHz)")->capture_default_str();
  gen->add_option("--gpu-min", dev_opts.gpu_min_ghz, "Lowest GPU frequency (GHz)")->capture_default_str();
  gen->add_option("--gpu-max", dev_opts.gpu_max_ghz, "Highest GPU frequency (GHz)")->capture_default_str();
  gen->add_option("--jitter", dev_opts.jitter_sigma, "Log-normal sigma of per-run noise")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Device JSON to write")->required();
  gen->callback([&] {
    action = [&] {
      const auto device = devicesim::make_device(gen_seed, dev_opts);
      write_output(ctx, gen_out, devicesim::device_to_json(device));
      out << "device " << device.device_id << ": " << frequency_pair_count(device.grid)
          << " frequency pairs\n";
    };
  });

  // profile
  auto* prof = app.add_subcommand("profile", "Run a profiling campaign on a simulated device");
  prof->footer(kUnits);
  std::string prof_device, prof_out;
  std::vector<std::string> prof_models;
  std::uint64_t prof_seed = 0;
  profiler::SamplingPlan plan;
  prof->add_option("--device", prof_device, "Device JSON")->required();
  prof->add_option("--model", prof_models, "Model spec JSON whose layers are profiled (repeatable)")
      ->required();
  prof->add_option("--seed", prof_seed, "Measurement noise seed (required)")->required();
  prof->add_option("--cpu-stride", plan.cpu_stride, "Profile every n-th CPU level")->capture_default_str();
  prof->add_option("--gpu-stride", plan.gpu_stride, "Profile every n-th GPU level")->capture_default_str();
  prof->add_option("--context-stride", plan.context_stride, "Transformer context step (tokens)")
      ->capture_default_str();
  prof->add_option("--context-max", plan.context_max, "Largest transformer context (tokens)")
      ->capture_default_str();
  prof->add_option("--iters,--iterations", plan.iterations, "Runs averaged per point")->capture_default_str();
  prof->add_option("--out", prof_out, "Dataset CSV to write; metadata goes to a .meta.json sidecar")
      ->required();
  prof->callback([&] {
    action = [&] {
      const auto device = devicesim::load_device(prof_device);
      const ModelSpec layers = merged_models(prof_models);
      devicesim::DeviceSimulator sim(device, prof_seed);
      profiler::SimulatorSource source(sim);
      ctx.log("profiling " + std::to_string(layers.layers.size()) + " layers");
      const auto ds = profiler::run_campaign(source, layers.layers, device.grid, plan);
      const fs::path p = output_path(prof_out);
      profiler::save_dataset(ds, p);
      ctx.log("wrote " + p.string());
      if (!ds.complete) throw IoError("profiling stopped early: " + ds.failure);
      out << "profiled " << ds.samples.size() << " samples\n";
    };
  });

  // fit
  auto* fit = app.add_subcommand("fit", "Fit per-layer-type estimators to a dataset");
  fit->footer(kUnits);
  std::string fit_dataset, fit_out, fit_regressor = "log_linear";
  fit->add_option("--dataset", fit_dataset, "Dataset CSV from `flame profile`")->required();
  fit->add_option("--regressor", fit_regressor, "Coefficient regressor: log_linear or boosted_trees")
      ->capture_default_str();
  fit->add_option("--out", fit_out, "Estimator store JSON to write")->required();
  fit->callback([&] {
    action = [&] {
      const auto ds = profiler::load_dataset(fit_dataset);
      layerfit::EstimatorOptions opts;
      opts.kind = layerfit::parse_regressor_kind(fit_regressor);
      const auto store = layerfit::fit_estimator_store(ds, opts);
      write_output(ctx, fit_out, layerfit::estimator_store_to_json(store));
      out << "fitted " << store.estimators.size() << " layer types\n";
    };
  });

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate model latency at one frequency pair");
  est->footer(kUnits);
  std::string est_store, est_model, est_timeline;
  double est_fc = 0.0, est_fg = 0.0;
  est->add_option("--estimators", est_store, "Estimator store JSON")->required();
  est->add_option("--model", est_model, "Model spec JSON")->required();
  est->add_option("--fc", est_fc, "CPU frequency (GHz)")->required();
  est->add_option("--fg", est_fg, "GPU frequency (GHz)")->required();
  est->add_option("--timeline", est_timeline, "Write per-layer CPU/GPU spans (ms) as CSV");
  est->callback([&] {
    action = [&] {
      const auto store = layerfit::load_estimator_store(est_store);
      const auto spec = load_model_spec(est_model);
      const auto e = modelest::estimate_model(store, spec, Frequency(est_fc), Frequency(est_fg));
      if (!est_timeline.empty()) {
        write_output(ctx, est_timeline, devicesim::spans_to_csv(e.timeline.layers));
      }
      out << "{\"f_c_ghz\": " << io::format_double(est_fc)
          << ", \"f_g_ghz\": " << io::format_double(est_fg)
          << ", \"total_ms\": " << io::format_double(e.total_ms)
          << ", \"naive_sum_ms\": " << io::format_double(modelest::naive_sum(e.layers)) << "}\n";
    };
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Estimate model latency over the whole frequency grid");
  sweep->footer(kUnits);
  std::string sw_store, sw_model, sw_device, sw_out;
  sweep->add_option("--estimators", sw_store, "Estimator store JSON")->required();
  sweep->add_option("--model", sw_model, "Model spec JSON")->required();
  sweep->add_option("--device", sw_device, "Device JSON; adds ground_truth_ms and err_pct columns");
  sweep->add_option("--out", sw_out, "CSV to write (default: stdout)");
  sweep->callback([&] {
    action = [&] {
      const auto store = layerfit::load_estimator_store(sw_store);
      const auto spec = load_model_spec(sw_model);
      std::optional<devicesim::DeviceConfig> device;
      if (!sw_device.empty()) {
        device = devicesim::load_device(sw_device);
        if (!(device->grid == store.grid)) {
          throw ValidationError("device grid differs from the estimator store grid");
        }
      }
      const std::string csv = sweep_csv(store, spec, device ? &*device : nullptr);
      if (sw_out.empty()) {
        out << csv;
      } else {
        write_output(ctx, sw_out, csv);
      }
    };
  });

  // govern
  auto* gov = app.add_subcommand("govern", "Run the deadline-driven governor against a simulated device");
  gov->footer(kUnits);
  std::string gv_store, gv_device, gv_model, gv_schedule, gv_out, gv_adapt, gv_policy = "greedy";
  std::optional<double> gv_deadline;
  std::vector<std::string> gv_disturb;
  std::int64_t gv_steps = 500, gv_ctx_start = 1, gv_ctx_max = 1024;
  std::uint64_t gv_seed = 0;
  bool gv_no_adapt = false;
  gov->add_option("--estimators", gv_store, "Estimator store JSON")->required();
  gov->add_option("--device", gv_device, "Device JSON")->required();
  gov->add_option("--model", gv_model, "Model spec JSON")->required();
  gov->add_option("--deadline-ms", gv_deadline, "Deadline per inference, or per token (ms)");
  gov->add_option("--deadline-schedule", gv_schedule,
                  R"(JSON {"deadlines":[{"step":0,"deadline_ms":20},...]})");
  gov->add_option("--steps", gv_steps, "Governing steps")->capture_default_str();
  gov->add_option("--disturb", gv_disturb, "Extra load LOAD@stepN[-M], e.g. 0.3@step250 (repeatable)");
  gov->add_flag("--no-adapt", gv_no_adapt, "Start with online adaptation disabled");
  gov->add_option("--adapt-schedule", gv_adapt, "Toggle adaptation, e.g. off@100,on@200");
  gov->add_option("--policy", gv_policy, "greedy, max or oracle")->capture_default_str();
  gov->add_option("--context-start", gv_ctx_start, "First context length for transformer specs (tokens)")
      ->capture_default_str();
  gov->add_option("--context-max", gv_ctx_max, "Context length that wraps to the start (tokens)")
      ->capture_default_str();
  gov->add_option("--seed", gv_seed, "Measurement noise seed (required)")->required();
  gov->add_option("--out", gv_out, "Trace CSV to write")->required();
  gov->callback([&] {
    action = [&] {
      governor::Scenario sc;
      sc.deadlines = deadline_schedule(gv_deadline, gv_schedule);
      const auto store = layerfit::load_estimator_store(gv_store);
      const auto device = devicesim::load_device(gv_device);
      sc.spec = load_model_spec(gv_model);
      sc.steps = gv_steps;
      for (const auto& d : gv_disturb) sc.disturbances.push_back(governor::parse_disturbance(d));
      sc.adaptation_enabled = !gv_no_adapt;
      if (!gv_adapt.empty()) sc.adaptation_changes = parse_adapt_schedule(gv_adapt);
      sc.policy = governor::parse_policy(gv_policy);
      sc.context_start = gv_ctx_start;
      sc.context_max = gv_ctx_max;
      if (!(device.grid == store.grid)) {
        throw ValidationError("device grid differs from the estimator store grid");
      }
      devicesim::DeviceSimulator sim(device, gv_seed);
      const auto trace = governor::govern_loop(store, sim, sc);
      write_output(ctx, gv_out, governor::trace_csv(trace));
      if (!trace.complete) throw IoError("governing stopped early: " + trace.failure);
      out << governor::eval_report_to_json(governor::evaluate_trace(trace.rows, sc.deadlines));
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Summarize a governor trace (MAPE, QoS, PPW)");
  ev->footer(kUnits);
  std::string ev_trace, ev_schedule, ev_out;
  std::optional<double> ev_deadline;
  ev->add_option("--trace", ev_trace, "Trace CSV from `flame govern`")->required();
  ev->add_option("--deadline-ms", ev_deadline, "Deadline per inference, or per token (ms)");
  ev->add_option("--deadline-schedule", ev_schedule, "Deadline schedule JSON");
  ev->add_option("--out", ev_out, "Report JSON to write (default: stdout only)");
  ev->callback([&] {
    action = [&] {
      const auto schedule = deadline_schedule(ev_deadline, ev_schedule);
      const auto rows = governor::parse_trace_csv(io::read_text_file(ev_trace));
      const std::string report = governor::eval_report_to_json(governor::evaluate_trace(rows, schedule));
      if (!ev_out.empty()) write_output(ctx, ev_out, report);
      out << report;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const UsageError& e) {
    err << "flame: usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "flame: I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ParseError& e) {
    err << "flame: parse error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "flame: validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const FitError& e) {
    err << "flame: fit error: " << e.what() << '\n';
    return kExitFit;
  }
}

}  // namespace flame::cli
