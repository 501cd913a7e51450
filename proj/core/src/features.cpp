#include "flame/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "flame/error.hpp"
#include "flame/workload.hpp"

namespace flame::layerfit {

namespace {

const std::vector<std::string> kCommon = {"macs",         "params",       "input_bytes",
                                          "output_bytes", "weight_bytes", "arithmetic_intensity",
                                          "total_bytes"};

std::vector<std::string> with_common(std::initializer_list<std::string> extra) {
  std::vector<std::string> out = kCommon;
  out.insert(out.end(), extra);
  return out;
}

}  // namespace

const std::vector<std::string>& raw_feature_names(LayerType type) {
  static const auto conv =
      with_common({"kernel_area_x_in_channels", "output_pixels", "input_pixels",
                   "input_channels", "output_channels", "kernel_size", "stride"});
  static const auto linear = with_common(
      {"input_features", "output_features", "fan_sum", "bias_count", "io_bytes"});
  static const auto transformer =
      with_common({"attention_score_macs", "context_sq_x_heads", "context_x_embed",
                   "projection_macs", "kv_bytes", "embed_dim", "context_length"});
  switch (type) {
    case LayerType::kConvolution: return conv;
    case LayerType::kLinear: return linear;
    case LayerType::kTransformer: return transformer;
  }
  return linear;
}

RawFeatures featureize(const LayerConfig& config) {
  const WorkloadShape w = workload_shape(config);
  RawFeatures f;
  f.names = raw_feature_names(config.layer_type);
  f.values = {w.macs,         w.params,      w.input_bytes, w.output_bytes,
              w.weight_bytes, w.arithmetic_intensity(), w.total_bytes()};
  auto p = [&](std::string_view key) { return static_cast<double>(config.at(key)); };
  switch (config.layer_type) {
    case LayerType::kConvolution: {
      const double k = p(param::kKernelSize);
      const double stride = p(param::kStride);
      const double oh = std::ceil(p(param::kInputHeight) / stride);
      const double ow = std::ceil(p(param::kInputWidth) / stride);
      f.values.insert(f.values.end(),
                      {k * k * p(param::kInputChannels), oh * ow,
                       p(param::kInputHeight) * p(param::kInputWidth), p(param::kInputChannels),
                       p(param::kOutputChannels), k, stride});
      break;
    }
    case LayerType::kLinear: {
      const double in = p(param::kInputFeatures);
      const double out = p(param::kOutputFeatures);
      f.values.insert(f.values.end(),
                      {in, out, in + out, out, w.input_bytes + w.output_bytes});
      break;
    }
    case LayerType::kTransformer: {
      const double e = p(param::kEmbedDim);
      const double ctx = p(param::kContextLength);
      f.values.insert(f.values.end(),
                      {attention_score_macs(config), ctx * ctx * p(param::kNumHeads), ctx * e,
                       ctx * 12.0 * e * e, 2.0 * kBytesPerElement * ctx * e, e, ctx});
      break;
    }
  }
  return f;
}

WorkloadFeatures FeatureSelection::apply(const RawFeatures& raw) const {
  WorkloadFeatures out;
  for (std::size_t i = 0; i < kWorkloadFeatureCount && i < indices.size(); ++i) {
    out.values[i] = raw.values.at(indices[i]);
  }
  out.names = names;
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw FitError("pearson needs two equal-length series of at least 2 points");
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  // Relative thresholds absorb the rounding left by averaging equal values.
  if (!(syy > 1e-24 * n * my * my) || syy == 0.0) {
    throw FitError("latency has zero variance; correlation undefined");
  }
  if (!(sxx > 1e-24 * n * mx * mx) || sxx == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

FeatureSelection select_features(std::span<const ProfileSample> samples, LayerType type) {
  // Latency of each config at its highest sampled pair.
  std::map<LayerConfig, const ProfileSample*> top;
  for (const auto& s : samples) {
    if (s.layer_config.layer_type != type) continue;
    auto [it, inserted] = top.try_emplace(s.layer_config, &s);
    if (!inserted) {
      const ProfileSample* cur = it->second;
      if (std::tie(s.f_c, s.f_g) > std::tie(cur->f_c, cur->f_g)) it->second = &s;
    }
  }
  if (top.size() < 3) {
    throw FitError("feature selection for " + std::string(to_string(type)) +
                   " needs >= 3 distinct configs, have " + std::to_string(top.size()));
  }

  const auto& names = raw_feature_names(type);
  std::vector<std::vector<double>> columns(names.size());
  std::vector<double> latency;
  for (const auto& [config, sample] : top) {
    const RawFeatures raw = featureize(config);
    for (std::size_t i = 0; i < names.size(); ++i) columns[i].push_back(raw.values[i]);
    latency.push_back(sample->total_ms);
  }

  std::vector<double> score(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    score[i] = std::abs(pearson(columns[i], latency));
  }
  std::vector<std::size_t> order(names.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

  FeatureSelection sel;
  sel.type = type;
  for (std::size_t r = 0; r < kWorkloadFeatureCount && r < order.size(); ++r) {
    sel.indices.push_back(order[r]);
    sel.scores.push_back(score[order[r]]);
    sel.names.push_back(names[order[r]]);
  }
  return sel;
}

FeatureSelection default_selection(LayerType type) {
  const auto& names = raw_feature_names(type);
  FeatureSelection sel;
  sel.type = type;
  for (std::size_t i = 0; i < kWorkloadFeatureCount && i < names.size(); ++i) {
    sel.indices.push_back(i);
    sel.scores.push_back(0.0);
    sel.names.push_back(names[i]);
  }
  return sel;
}

}  // namespace flame::layerfit
