#pragma once

#include <span>
#include <string>
#include <vector>

#include "flame/types.hpp"

// Analytic workload descriptors standing in for hardware performance
// counters, and their Pearson ranking against measured latency.
namespace flame::layerfit {

struct RawFeatures {
  std::vector<std::string> names;
  std::vector<double> values;
};

const std::vector<std::string>& raw_feature_names(LayerType type);

// Deterministic per-type descriptors: MACs, parameter count, input, output
// and weight bytes, arithmetic intensity, plus type-specific terms.
RawFeatures featureize(const LayerConfig& config);

struct FeatureSelection {
  LayerType type = LayerType::kLinear;
  std::vector<std::size_t> indices;  // into the raw feature vector, best first
  std::vector<double> scores;        // |Pearson r|
  std::vector<std::string> names;

  WorkloadFeatures apply(const RawFeatures& raw) const;
};

// Pearson r; a constant x yields 0. Throws FitError when y is constant.
double pearson(std::span<const double> x, std::span<const double> y);

// Ranks raw features of every config of `type` by |r| against the config's
// total latency at its highest sampled frequency pair and keeps the top
// kWorkloadFeatureCount. Ties go to the lower feature index. Needs >= 3
// distinct configs.
FeatureSelection select_features(std::span<const ProfileSample> samples, LayerType type);

// First kWorkloadFeatureCount raw features, for types too thin to rank.
FeatureSelection default_selection(LayerType type);

}  // namespace flame::layerfit
