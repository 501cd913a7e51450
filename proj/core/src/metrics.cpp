#include <cmath>
#include <string>

#include "flame/error.hpp"
#include "flame/governor.hpp"
#include "json_convert.hpp"

namespace flame::governor {

double mape(std::span<const double> truth, std::span<const double> estimate) {
  if (truth.size() != estimate.size() || truth.empty()) {
    throw ValidationError("mape needs two equal-length, non-empty series");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) {
      throw ValidationError("mape undefined: ground truth entry " + std::to_string(i) + " is 0");
    }
    sum += std::abs(truth[i] - estimate[i]) / std::abs(truth[i]);
  }
  return 100.0 * sum / static_cast<double>(truth.size());
}

double qos(double achieved_rate, double required_rate) {
  if (!(required_rate > 0.0)) throw ValidationError("required rate must be positive");
  if (!(achieved_rate >= 0.0)) throw ValidationError("achieved rate must be non-negative");
  return std::min(achieved_rate / required_rate, 1.0) * 100.0;
}

double ppw(double qos_percent, double avg_power_w) {
  if (!(avg_power_w > 0.0)) throw ValidationError("average power must be positive");
  return qos_percent / avg_power_w;
}

std::string eval_report_to_json(const EvalReport& r) {
  const detail::json j{{"mape_percent", r.mape},
                       {"qos_percent", r.qos},
                       {"ppw_percent_per_w", r.ppw},
                       {"avg_power_w", r.avg_power_w},
                       {"achieved_rate_per_s", r.achieved_rate},
                       {"required_rate_per_s", r.required_rate},
                       {"steps", r.steps},
                       {"deadline_misses", r.deadline_misses}};
  return j.dump(2) + "\n";
}

EvalReport evaluate_trace(std::span<const TraceRow> rows, const DeadlineSchedule& deadlines) {
  deadlines.validate();
  if (rows.empty()) throw ValidationError("cannot evaluate an empty trace");
  EvalReport r;
  r.steps = rows.size();
  std::vector<double> truth, est;
  double meas_sum = 0.0, deadline_sum = 0.0, energy = 0.0;
  for (const auto& row : rows) {
    if (!(row.meas_ms > 0.0)) throw ValidationError("trace step with non-positive latency");
    truth.push_back(row.meas_ms);
    est.push_back(row.pred_ms);
    const double t_d = deadlines.at(row.step);
    meas_sum += row.meas_ms;
    deadline_sum += t_d;
    energy += row.power_w * row.meas_ms;
    if (row.meas_ms > t_d) ++r.deadline_misses;
  }
  const auto n = static_cast<double>(rows.size());
  r.mape = mape(truth, est);
  r.achieved_rate = 1000.0 * n / meas_sum;
  r.required_rate = 1000.0 * n / deadline_sum;
  r.qos = qos(r.achieved_rate, r.required_rate);
  r.avg_power_w = energy / meas_sum;
  r.ppw = ppw(r.qos, r.avg_power_w);
  return r;
}

}  // namespace flame::governor
