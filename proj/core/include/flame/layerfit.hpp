#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "flame/features.hpp"
#include "flame/profiler.hpp"
#include "flame/regression.hpp"
#include "flame/types.hpp"

// Per-layer estimator: processor times k / f + b, the piecewise interaction
// factor, and generalization of the coefficients across configurations.
namespace flame::layerfit {

struct TimedPoint {
  Frequency f;
  double t_ms;
};

struct ProcessorFit {
  double k = 0.0;  // GHz*ms, never negative
  double b = 0.0;  // ms
};

// Least squares of t = k / f + b. A negative slope is replaced by k = 0 and
// b = mean(t). Throws FitError when fewer than two distinct frequencies.
ProcessorFit fit_processor_model(std::span<const TimedPoint> points);

struct DeltaPoint {
  Frequency f_c;
  Frequency f_g;
  double delta_ms;
};

struct BreakpointResult {
  Frequency breakpoint{1.0};
  // Sampled CPU levels bracketing the split: lower is the last unsaturated
  // sampled level, upper the first saturated one.
  Frequency lower{1.0};
  Frequency upper{1.0};
  double sse_two_branch = 0.0;
  double sse_single_branch = 0.0;
  bool low_confidence = false;
};

// Tries every interior sampled CPU level as the last unsaturated level, fits
// both branches and keeps the split with the lowest total SSE (ties to the
// lower level). When grid_cpu_levels is non-empty, the breakpoint is moved
// to the grid level in [lower, upper) where the two branches meet.
// Throws FitError with fewer than 3 sampled CPU levels.
BreakpointResult detect_breakpoint(std::span<const DeltaPoint> points,
                                   std::span<const Frequency> grid_cpu_levels = {});

enum class BranchFitMode {
  kStrict,  // each side needs >= 3 samples over >= 2 CPU and >= 2 GPU levels
  kReduce,  // drops a frequency term when a side has a single level of it
};

struct DeltaFit {
  DeltaBranch unsaturated;
  DeltaBranch saturated;
};

DeltaFit fit_delta(std::span<const DeltaPoint> points, Frequency breakpoint,
                   BranchFitMode mode = BranchFitMode::kStrict);

struct CoefficientSet {
  LatencyLaw law;
  double fit_residual_ms = 0.0;  // RMS of total latency over the fitted samples

  friend bool operator==(const CoefficientSet&, const CoefficientSet&) = default;
};

inline constexpr std::size_t kCoefficientCount = 11;
inline constexpr std::array<std::string_view, kCoefficientCount> kCoefficientNames = {
    "k_c",     "b_c",     "k_g",   "b_g",   "uns_k_c",        "uns_k_g",
    "uns_b",   "sat_k_c", "sat_k_g", "sat_b", "breakpoint_ghz"};

std::array<double, kCoefficientCount> flatten(const LatencyLaw& law);

// All samples must belong to one config. cpu_levels are the grid CPU levels
// used to place the breakpoint.
CoefficientSet fit_layer_coefficients(std::span<const ProfileSample> samples,
                                      std::span<const Frequency> cpu_levels);

struct TrainingEntry {
  LayerConfig config;
  CoefficientSet coefficients;
};

struct EstimatorOptions {
  RegressorKind kind = RegressorKind::kLogLinear;
};

struct LayerTypeEstimator {
  LayerType layer_type = LayerType::kLinear;
  FeatureSelection selector;
  std::vector<TargetRegressor> parser;          // raw features -> each workload feature
  std::vector<TargetRegressor> coefficient_regressors;  // workload features -> kCoefficientNames
  std::vector<TrainingEntry> training;          // sorted by config
  std::vector<Frequency> cpu_levels;

  // Fewer than 3 training configs: only profiled configs can be estimated.
  bool lookup_only() const { return coefficient_regressors.empty(); }

  WorkloadFeatures parse_features(const LayerConfig& config) const;

  // Regressor output, snapped breakpoint, k clamped at 0.
  LatencyLaw predict_coefficients(const LayerConfig& config) const;

  // Fitted coefficients of a profiled config, otherwise the prediction.
  LatencyLaw coefficients_for(const LayerConfig& config) const;

  const TrainingEntry* find_training(const LayerConfig& config) const;
};

// Per-config fits, then the parser and coefficient regressors. Errors name
// the offending config.
LayerTypeEstimator build_layer_estimator(const profiler::ProfileDataset& dataset,
                                         LayerType type, const EstimatorOptions& options = {});

FeatureSelection select_features(const profiler::ProfileDataset& dataset, LayerType type);

struct LayerEstimate {
  double cpu_ms = 0.0;
  double gpu_ms = 0.0;
  double delta_ms = 0.0;
  double total_ms = 0.0;
};

// Processor times are floored at 0.
LayerEstimate evaluate_law(const LatencyLaw& law, Frequency f_c, Frequency f_g);

LayerEstimate estimate_layer(const LayerTypeEstimator& estimator, const LayerConfig& config,
                             Frequency f_c, Frequency f_g);

}  // namespace flame::layerfit
