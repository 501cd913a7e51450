#include "flame/modelest.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "flame/error.hpp"

namespace flame::modelest {

Timeline reconstruct_timeline(std::span<const LayerTiming> layers) {
  if (layers.empty()) throw ValidationError("timeline needs at least one layer");
  Timeline t;
  t.layers.reserve(layers.size());
  double cpu_clock = 0.0;
  double gpu_free = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (!(l.cpu_ms >= 0.0) || !(l.gpu_ms >= 0.0) || !std::isfinite(l.delta_ms)) {
      throw ValidationError("layer " + std::to_string(i) +
                            ": processor times must be non-negative and finite");
    }
    LayerSpan s;
    s.cpu_start_ms = cpu_clock;
    s.cpu_end_ms = cpu_clock + l.cpu_ms;
    s.gpu_start_ms = std::max(s.cpu_end_ms + l.delta_ms, gpu_free);
    s.gpu_end_ms = s.gpu_start_ms + l.gpu_ms;
    cpu_clock = s.cpu_end_ms;
    gpu_free = s.gpu_end_ms;
    t.layers.push_back(s);
  }
  t.total_ms = t.layers.back().gpu_end_ms - t.layers.front().cpu_start_ms;
  return t;
}

double naive_sum(std::span<const LayerTiming> layers) {
  double sum = 0.0;
  for (const auto& l : layers) sum += l.cpu_ms + l.gpu_ms + l.delta_ms;
  return sum;
}

namespace {

LayerTiming to_timing(const layerfit::LayerEstimate& e) { return {e.cpu_ms, e.gpu_ms, e.delta_ms}; }

ModelEstimate assemble(std::vector<LayerTiming> layers) {
  ModelEstimate out;
  out.timeline = reconstruct_timeline(layers);
  out.total_ms = out.timeline.total_ms;
  out.layers = std::move(layers);
  return out;
}

}  // namespace

ModelEstimate estimate_model(const layerfit::EstimatorStore& store, const ModelSpec& spec,
                             Frequency f_c, Frequency f_g) {
  if (spec.layers.empty()) throw ValidationError("empty model");
  std::vector<LayerTiming> layers;
  layers.reserve(spec.layers.size());
  for (const auto& config : spec.layers) {
    layers.push_back(to_timing(
        layerfit::estimate_layer(store.at(config.layer_type), config, f_c, f_g)));
  }
  return assemble(std::move(layers));
}

const LatencyLaw& ModelEstimator::law(const LayerConfig& config) const {
  auto it = cache_.find(config);
  if (it == cache_.end()) {
    it = cache_.emplace(config, store_.at(config.layer_type).coefficients_for(config)).first;
  }
  return it->second;
}

ModelEstimate ModelEstimator::estimate(const ModelSpec& spec, Frequency f_c,
                                       Frequency f_g) const {
  if (spec.layers.empty()) throw ValidationError("empty model");
  std::vector<LayerTiming> layers;
  layers.reserve(spec.layers.size());
  for (const auto& config : spec.layers) {
    layers.push_back(to_timing(layerfit::evaluate_law(law(config), f_c, f_g)));
  }
  return assemble(std::move(layers));
}

double ModelEstimator::total_ms(const ModelSpec& spec, Frequency f_c, Frequency f_g) const {
  return estimate(spec, f_c, f_g).total_ms;
}

void AdaptationState::validate() const {
  if (window < 1) throw ValidationError("adaptation window must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ValidationError("adaptation alpha must be in (0, 1]");
  if (cadence < window + 1) {
    throw ValidationError("adaptation cadence must be >= window + 1 so batches do not overlap");
  }
  if (!std::isfinite(delta_t)) throw ValidationError("adaptation delta must be finite");
}

AdaptationState adapt_update(const AdaptationState& state, std::span<const Observation> batch) {
  state.validate();
  if (batch.size() != state.batch_size()) {
    throw ValidationError("adaptation batch must hold " + std::to_string(state.batch_size()) +
                          " observations, got " + std::to_string(batch.size()));
  }
  double sigma = 0.0;
  for (const auto& o : batch) sigma += o.measured_ms - o.estimate_ms;
  sigma /= static_cast<double>(batch.size());
  AdaptationState next = state;
  next.delta_t = state.alpha * sigma + (1.0 - state.alpha) * state.delta_t;
  return next;
}

Calibrated calibrated_estimate(const AdaptationState& state, double raw_ms) {
  const double v = raw_ms + state.delta_t;
  if (v < 0.0) return {0.0, true};
  return {v, false};
}

OnlineAdapter::OnlineAdapter(AdaptationState state) : state_(state) { state_.validate(); }

void OnlineAdapter::set_enabled(bool enabled) {
  if (enabled && !enabled_) {
    history_.clear();
    since_update_ = 0;
  }
  enabled_ = enabled;
}

bool OnlineAdapter::observe(double raw_estimate_ms, double measured_ms) {
  if (!enabled_) return false;
  history_.push_back({raw_estimate_ms, measured_ms});
  while (history_.size() > state_.batch_size()) history_.pop_front();
  if (++since_update_ < state_.cadence || history_.size() < state_.batch_size()) return false;
  const std::vector<Observation> batch(history_.begin(), history_.end());
  state_ = adapt_update(state_, batch);
  since_update_ = 0;
  return true;
}

Calibrated OnlineAdapter::calibrate(double raw_ms) const {
  if (!enabled_) return {raw_ms, false};
  return calibrated_estimate(state_, raw_ms);
}

}  // namespace flame::modelest
