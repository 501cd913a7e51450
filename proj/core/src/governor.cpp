#include "flame/governor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include "flame/csv.hpp"
#include "flame/error.hpp"
#include "flame/io.hpp"
#include "json_convert.hpp"

namespace flame::governor {

Deadline::Deadline(double t_d_ms) : t_d_ms_(t_d_ms) {
  if (!(t_d_ms > 0.0) || !std::isfinite(t_d_ms)) {
    throw ValidationError("deadline must be a positive number of ms");
  }
}

namespace {

GovernorDecision decision(Frequency f_c, Frequency f_g, double latency, bool feasible,
                          std::size_t calls, const devicesim::PowerModel& power) {
  return GovernorDecision{f_c, f_g, latency, devicesim::measure_power(power, f_c, f_g), feasible,
                          calls};
}

}  // namespace

GovernorDecision greedy_search(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               Deadline deadline, const devicesim::PowerModel& power) {
  std::size_t calls = 0;
  const Frequency top_c = grid.cpu_max();

  std::optional<Frequency> f_g;
  double at_top = 0.0;
  for (const auto& g : grid.gpu_levels()) {
    ++calls;
    at_top = estimate(top_c, g);
    if (at_top <= deadline.ms()) {
      f_g = g;
      break;
    }
  }
  if (!f_g) return decision(top_c, grid.gpu_max(), at_top, false, calls, power);

  // The top CPU level is already known to be feasible at f_g.
  for (const auto& c : grid.cpu_levels()) {
    if (c == top_c) break;
    ++calls;
    const double t = estimate(c, *f_g);
    if (t <= deadline.ms()) return decision(c, *f_g, t, true, calls, power);
  }
  return decision(top_c, *f_g, at_top, true, calls, power);
}

GovernorDecision oracle_search(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               const devicesim::PowerModel& power, Deadline deadline) {
  std::size_t calls = 0;
  std::optional<GovernorDecision> best;
  double top_latency = 0.0;
  for (const auto& c : grid.cpu_levels()) {
    for (const auto& g : grid.gpu_levels()) {
      ++calls;
      const double t = estimate(c, g);
      if (c == grid.cpu_max() && g == grid.gpu_max()) top_latency = t;
      if (t > deadline.ms()) continue;
      const double p = devicesim::measure_power(power, c, g);
      if (!best || p < best->predicted_power_w) best = GovernorDecision{c, g, t, p, true, 0};
    }
  }
  if (!best) {
    return decision(grid.cpu_max(), grid.gpu_max(), top_latency, false, calls, power);
  }
  best->estimator_calls = calls;
  return *best;
}

GovernorDecision max_frequency(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               Deadline deadline, const devicesim::PowerModel& power) {
  const double t = estimate(grid.cpu_max(), grid.gpu_max());
  return decision(grid.cpu_max(), grid.gpu_max(), t, t <= deadline.ms(), 1, power);
}

void DeadlineSchedule::validate() const {
  if (changes.empty() || changes.front().step != 0) {
    throw ValidationError("deadline schedule must start at step 0");
  }
  for (std::size_t i = 0; i < changes.size(); ++i) {
    Deadline{changes[i].t_d_ms};
    if (i > 0 && changes[i].step <= changes[i - 1].step) {
      throw ValidationError("deadline schedule steps must be strictly ascending");
    }
  }
}

double DeadlineSchedule::at(std::int64_t step) const {
  double t = changes.front().t_d_ms;
  for (const auto& c : changes) {
    if (c.step > step) break;
    t = c.t_d_ms;
  }
  return t;
}

DeadlineSchedule DeadlineSchedule::constant(double t_d_ms) {
  DeadlineSchedule s{{{0, t_d_ms}}};
  s.validate();
  return s;
}

DeadlineSchedule parse_deadline_schedule(std::string_view json_text) {
  const auto j = detail::parse_json(json_text);
  DeadlineSchedule s;
  try {
    for (const auto& c : detail::require(j, "deadlines")) {
      s.changes.push_back({detail::require(c, "step").get<std::int64_t>(),
                           detail::require(c, "deadline_ms").get<double>()});
    }
  } catch (const detail::json::exception& e) {
    throw ValidationError(std::string("malformed deadline schedule: ") + e.what());
  }
  s.validate();
  return s;
}

DeadlineSchedule load_deadline_schedule(const std::filesystem::path& path) {
  return parse_deadline_schedule(io::read_text_file(path));
}

bool Disturbance::active(std::int64_t step) const {
  return step >= start_step && (!end_step || step < *end_step);
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || v < 0) {
    throw ValidationError("bad " + std::string(what) + " \"" + std::string(s) + "\"");
  }
  return v;
}

}  // namespace

Disturbance parse_disturbance(std::string_view text) {
  const auto at = text.find("@step");
  if (at == std::string_view::npos) {
    throw ValidationError("disturbance must look like LOAD@stepN or LOAD@stepN-M");
  }
  Disturbance d;
  const std::string load(text.substr(0, at));
  char* end = nullptr;
  d.load = std::strtod(load.c_str(), &end);
  if (load.empty() || end != load.c_str() + load.size() || !std::isfinite(d.load) ||
      d.load <= -1.0) {
    throw ValidationError("bad disturbance load \"" + load + "\"");
  }
  const auto range = text.substr(at + 5);
  const auto dash = range.find('-');
  d.start_step = parse_int(range.substr(0, dash), "disturbance step");
  if (dash != std::string_view::npos) {
    d.end_step = parse_int(range.substr(dash + 1), "disturbance end step");
    if (*d.end_step <= d.start_step) throw ValidationError("disturbance end must follow start");
  }
  return d;
}

std::string_view to_string(Policy policy) {
  switch (policy) {
    case Policy::kGreedy: return "greedy";
    case Policy::kMaxFrequency: return "max";
    case Policy::kOracle: return "oracle";
  }
  return "greedy";
}

Policy parse_policy(std::string_view name) {
  for (auto p : {Policy::kGreedy, Policy::kMaxFrequency, Policy::kOracle}) {
    if (to_string(p) == name) return p;
  }
  throw ValidationError("unknown policy \"" + std::string(name) + "\"");
}

void Scenario::validate() const {
  validate_model_spec(spec);
  deadlines.validate();
  if (steps < 1) throw ValidationError("scenario needs at least one step");
  adaptation.validate();
  for (std::size_t i = 1; i < adaptation_changes.size(); ++i) {
    if (adaptation_changes[i].step < adaptation_changes[i - 1].step) {
      throw ValidationError("adaptation changes must be in step order");
    }
  }
  if (context_start < 1 || context_max < context_start) {
    throw ValidationError("context range must satisfy 1 <= start <= max");
  }
}

GovernTrace govern_loop(const layerfit::EstimatorStore& store,
                        devicesim::DeviceSimulator& device, const Scenario& scenario) {
  scenario.validate();
  const auto& grid = device.config().grid;
  const auto& power = device.config().power;
  modelest::ModelEstimator estimator(store);
  modelest::OnlineAdapter adapter(scenario.adaptation);
  adapter.set_enabled(scenario.adaptation_enabled);

  const bool per_token = scenario.spec.has_transformer();
  const std::int64_t span = scenario.context_max - scenario.context_start + 1;

  GovernTrace trace;
  std::size_t next_change = 0;
  for (std::int64_t step = 0; step < scenario.steps; ++step) {
    while (next_change < scenario.adaptation_changes.size() &&
           scenario.adaptation_changes[next_change].step <= step) {
      adapter.set_enabled(scenario.adaptation_changes[next_change].enabled);
      ++next_change;
    }
    try {
      const ModelSpec spec = per_token
                                 ? scenario.spec.with_context(scenario.context_start + step % span)
                                 : scenario.spec;
      const Deadline deadline(scenario.deadlines.at(step));
      const LatencyEstimator calibrated = [&](Frequency c, Frequency g) {
        return adapter.calibrate(estimator.total_ms(spec, c, g)).value_ms;
      };

      GovernorDecision d;
      switch (scenario.policy) {
        case Policy::kGreedy: d = greedy_search(calibrated, grid, deadline, power); break;
        case Policy::kMaxFrequency: d = max_frequency(calibrated, grid, deadline, power); break;
        case Policy::kOracle: d = oracle_search(calibrated, grid, power, deadline); break;
      }

      double load = 0.0;
      bool disturbed = false;
      for (const auto& dist : scenario.disturbances) {
        if (dist.active(step)) {
          load += dist.load;
          disturbed = true;
        }
      }
      const devicesim::SimTrace run =
          device.simulate_model(spec, d.f_c, d.f_g, disturbed ? std::optional(load) : std::nullopt);
      const double raw = estimator.total_ms(spec, d.f_c, d.f_g);

      TraceRow row;
      row.step = step;
      row.f_c = d.f_c;
      row.f_g = d.f_g;
      row.pred_ms = d.predicted_latency_ms;
      row.raw_pred_ms = raw;
      row.meas_ms = run.total_latency_ms;
      row.power_w = run.avg_power_w;
      row.deadline_ms = deadline.ms();
      row.qos_flag = run.total_latency_ms <= deadline.ms();
      row.delta_t = adapter.delta_t();
      row.feasible = d.feasible;
      trace.rows.push_back(row);

      adapter.observe(raw, run.total_latency_ms);
    } catch (const Error& e) {
      trace.complete = false;
      trace.failure = "step " + std::to_string(step) + ": " + e.what();
      break;
    }
  }
  return trace;
}

namespace {

const std::vector<std::string> kTraceHeader = {"step",   "f_c",     "f_g",      "pred_ms",
                                               "meas_ms", "power_w", "qos_flag", "delta_t"};

}  // namespace

std::string trace_csv(const GovernTrace& trace) {
  std::string out = csv::join(kTraceHeader);
  for (const auto& r : trace.rows) {
    out += csv::join({std::to_string(r.step), io::format_double(r.f_c.ghz()),
                      io::format_double(r.f_g.ghz()), io::format_double(r.pred_ms),
                      io::format_double(r.meas_ms), io::format_double(r.power_w),
                      r.qos_flag ? "1" : "0", io::format_double(r.delta_t)});
  }
  return out;
}

std::vector<TraceRow> parse_trace_csv(std::string_view text) {
  const auto rows = csv::parse(text);
  if (rows.empty() || rows.front().fields != kTraceHeader) {
    std::string want = csv::join(kTraceHeader);
    want.pop_back();
    throw ParseError("trace header must be " + want, 0);
  }
  std::vector<TraceRow> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.fields.size() != kTraceHeader.size()) {
      throw ParseError("trace row has " + std::to_string(row.fields.size()) + " fields, want " +
                           std::to_string(kTraceHeader.size()),
                       row.byte_offset);
    }
    const auto& f = row.fields;
    TraceRow r;
    r.step = csv::to_int(f[0], row, "step");
    try {
      r.f_c = Frequency(csv::to_double(f[1], row, "f_c"));
      r.f_g = Frequency(csv::to_double(f[2], row, "f_g"));
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), row.byte_offset);
    }
    r.pred_ms = csv::to_double(f[3], row, "pred_ms");
    r.meas_ms = csv::to_double(f[4], row, "meas_ms");
    r.power_w = csv::to_double(f[5], row, "power_w");
    const auto flag = csv::to_int(f[6], row, "qos_flag");
    if (flag != 0 && flag != 1) throw ParseError("qos_flag must be 0 or 1", row.byte_offset);
    r.qos_flag = flag == 1;
    r.delta_t = csv::to_double(f[7], row, "delta_t");
    r.raw_pred_ms = r.pred_ms - r.delta_t;
    out.push_back(r);
  }
  return out;
}

}  // namespace flame::governor
