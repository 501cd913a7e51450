#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "flame/estimator_store.hpp"
#include "flame/types.hpp"

// Whole-model latency from per-layer estimates, and the online bias corrector.
namespace flame::modelest {

struct LayerTiming {
  double cpu_ms = 0.0;
  double gpu_ms = 0.0;
  double delta_ms = 0.0;  // signed
};

struct Timeline {
  std::vector<LayerSpan> layers;
  double total_ms = 0.0;
};

// CPU work runs back to back from t = 0. A layer's GPU part starts at
// cpu_end + delta, but never before the previous GPU part has finished and
// never before t = 0. Throws ValidationError on negative processor times.
Timeline reconstruct_timeline(std::span<const LayerTiming> layers);

// Sum of every layer's T_c + T_g + delta, ignoring overlap between layers.
double naive_sum(std::span<const LayerTiming> layers);

struct ModelEstimate {
  double total_ms = 0.0;
  Timeline timeline;
  std::vector<LayerTiming> layers;
};

ModelEstimate estimate_model(const layerfit::EstimatorStore& store, const ModelSpec& spec,
                             Frequency f_c, Frequency f_g);

// Caches per-config coefficients across calls, which is what a governor
// sweeping many frequency pairs of one spec needs. Not thread safe.
class ModelEstimator {
 public:
  explicit ModelEstimator(const layerfit::EstimatorStore& store) : store_(store) {}

  ModelEstimate estimate(const ModelSpec& spec, Frequency f_c, Frequency f_g) const;
  double total_ms(const ModelSpec& spec, Frequency f_c, Frequency f_g) const;

  const layerfit::EstimatorStore& store() const { return store_; }

 private:
  const LatencyLaw& law(const LayerConfig& config) const;

  const layerfit::EstimatorStore& store_;
  mutable std::map<LayerConfig, LatencyLaw> cache_;
};

struct Observation {
  double estimate_ms = 0.0;  // uncorrected model estimate
  double measured_ms = 0.0;
};

struct AdaptationState {
  int window = 9;    // w; one update consumes w + 1 observations
  double alpha = 0.6;
  int cadence = 10;  // observations between updates
  double delta_t = 0.0;  // ms

  void validate() const;
  std::size_t batch_size() const { return static_cast<std::size_t>(window) + 1; }
};

// sigma = mean(measured - estimate) over the batch;
// delta_t = alpha * sigma + (1 - alpha) * previous delta_t.
// Throws ValidationError unless the batch holds exactly window + 1 entries.
AdaptationState adapt_update(const AdaptationState& state, std::span<const Observation> batch);

struct Calibrated {
  double value_ms = 0.0;
  bool clamped = false;  // raw + delta_t was negative
};

Calibrated calibrated_estimate(const AdaptationState& state, double raw_ms);

// Feeds observations to adapt_update every `cadence` observations using the
// most recent window + 1 of them. While disabled, observations are dropped
// and the correction is not applied.
class OnlineAdapter {
 public:
  explicit OnlineAdapter(AdaptationState state = {});

  // Re-enabling starts a fresh batch.
  void set_enabled(bool enabled);
  bool enabled() const { return enabled_; }

  // Returns true when this observation triggered an update.
  bool observe(double raw_estimate_ms, double measured_ms);
  Calibrated calibrate(double raw_ms) const;

  const AdaptationState& state() const { return state_; }
  double delta_t() const { return state_.delta_t; }

 private:
  AdaptationState state_;
  std::deque<Observation> history_;
  int since_update_ = 0;
  bool enabled_ = true;
};

}  // namespace flame::modelest
