#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "flame/layerfit.hpp"
#include "flame/profiler.hpp"

namespace flame::layerfit {

// Trained estimators of one device, one per profiled layer type.
struct EstimatorStore {
  std::string device_id;
  FrequencyGrid grid;
  std::map<LayerType, LayerTypeEstimator> estimators;

  // Throws FitError naming the type when it was never trained.
  const LayerTypeEstimator& at(LayerType type) const;
};

EstimatorStore fit_estimator_store(const profiler::ProfileDataset& dataset,
                                   const EstimatorOptions& options = {});

std::string estimator_store_to_json(const EstimatorStore& store);
EstimatorStore parse_estimator_store(std::string_view json_text);
EstimatorStore load_estimator_store(const std::filesystem::path& path);
void save_estimator_store(const EstimatorStore& store, const std::filesystem::path& path);

}  // namespace flame::layerfit
