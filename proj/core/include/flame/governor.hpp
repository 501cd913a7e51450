#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flame/devicesim.hpp"
#include "flame/estimator_store.hpp"
#include "flame/modelest.hpp"
#include "flame/types.hpp"

// Deadline-aware frequency selection and the metrics used to judge it.
namespace flame::governor {

// Latency budget per inference, or per token for transformer specs (ms).
class Deadline {
 public:
  explicit Deadline(double t_d_ms);
  double ms() const noexcept { return t_d_ms_; }

 private:
  double t_d_ms_;
};

using LatencyEstimator = std::function<double(Frequency f_c, Frequency f_g)>;

struct GovernorDecision {
  Frequency f_c{1.0};
  Frequency f_g{1.0};
  double predicted_latency_ms = 0.0;
  double predicted_power_w = 0.0;
  bool feasible = false;
  std::size_t estimator_calls = 0;
};

// Pins the CPU at its top level and takes the lowest GPU level meeting the
// deadline, then the lowest CPU level meeting it at that GPU level. Returns
// the top pair flagged infeasible when the first phase finds nothing.
GovernorDecision greedy_search(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               Deadline deadline, const devicesim::PowerModel& power = {});

// Every pair; the feasible pair of least power, ties to lower f_c then f_g.
GovernorDecision oracle_search(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               const devicesim::PowerModel& power, Deadline deadline);

// Always the top pair.
GovernorDecision max_frequency(const LatencyEstimator& estimate, const FrequencyGrid& grid,
                               Deadline deadline, const devicesim::PowerModel& power = {});

// Percent. Throws ValidationError on length mismatch, empty input or a zero
// ground-truth entry.
double mape(std::span<const double> truth, std::span<const double> estimate);

// Percent, capped at 100.
double qos(double achieved_rate, double required_rate);

// Percent per watt.
double ppw(double qos_percent, double avg_power_w);

struct EvalReport {
  double mape = 0.0;           // %
  double qos = 0.0;            // %
  double ppw = 0.0;            // %/W
  double avg_power_w = 0.0;    // time weighted
  double achieved_rate = 0.0;  // items/s
  double required_rate = 0.0;  // items/s
  std::size_t steps = 0;
  std::size_t deadline_misses = 0;
};

std::string eval_report_to_json(const EvalReport& report);

// Deadline in force from `step` onwards.
struct DeadlineChange {
  std::int64_t step = 0;
  double t_d_ms = 0.0;
};

struct DeadlineSchedule {
  std::vector<DeadlineChange> changes;  // ascending steps, first at step 0

  void validate() const;
  double at(std::int64_t step) const;
  static DeadlineSchedule constant(double t_d_ms);
};

// {"deadlines":[{"step":0,"deadline_ms":20},{"step":250,"deadline_ms":12}]}
DeadlineSchedule parse_deadline_schedule(std::string_view json_text);
DeadlineSchedule load_deadline_schedule(const std::filesystem::path& path);

struct Disturbance {
  std::int64_t start_step = 0;
  std::optional<std::int64_t> end_step;  // exclusive
  double load = 0.0;

  bool active(std::int64_t step) const;
};

// "0.3@step250" or "0.3@step250-400".
Disturbance parse_disturbance(std::string_view text);

struct AdaptationChange {
  std::int64_t step = 0;
  bool enabled = true;
};

enum class Policy { kGreedy, kMaxFrequency, kOracle };

std::string_view to_string(Policy policy);
Policy parse_policy(std::string_view name);

struct Scenario {
  ModelSpec spec;
  DeadlineSchedule deadlines;
  std::int64_t steps = 0;
  std::vector<Disturbance> disturbances;
  bool adaptation_enabled = true;
  std::vector<AdaptationChange> adaptation_changes;  // ascending steps
  modelest::AdaptationState adaptation;
  Policy policy = Policy::kGreedy;
  // Transformer specs decode one token per step; the context grows by one
  // per step and wraps back to context_start after context_max.
  std::int64_t context_start = 1;
  std::int64_t context_max = 1024;

  void validate() const;
};

struct TraceRow {
  std::int64_t step = 0;
  Frequency f_c{1.0};
  Frequency f_g{1.0};
  double pred_ms = 0.0;  // calibrated estimate at the chosen pair
  double meas_ms = 0.0;
  double power_w = 0.0;
  bool qos_flag = false;  // meas_ms <= deadline
  double delta_t = 0.0;   // correction in force when deciding
  bool feasible = true;
  double raw_pred_ms = 0.0;
  double deadline_ms = 0.0;
};

struct GovernTrace {
  std::vector<TraceRow> rows;
  bool complete = true;
  std::string failure;
};

// Each step: decide with the calibrated estimate, run the simulator at the
// chosen pair, then feed (raw estimate, measurement) to the adapter. A
// simulator failure ends the run and returns the partial trace.
GovernTrace govern_loop(const layerfit::EstimatorStore& store,
                        devicesim::DeviceSimulator& device, const Scenario& scenario);

// CSV: step,f_c,f_g,pred_ms,meas_ms,power_w,qos_flag,delta_t
std::string trace_csv(const GovernTrace& trace);
std::vector<TraceRow> parse_trace_csv(std::string_view text);

// Metrics of a trace against the deadlines in force at each step.
EvalReport evaluate_trace(std::span<const TraceRow> rows, const DeadlineSchedule& deadlines);

}  // namespace flame::governor
