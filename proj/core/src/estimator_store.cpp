#include "flame/estimator_store.hpp"

#include "flame/error.hpp"
#include "flame/io.hpp"
#include "json_convert.hpp"

namespace flame::layerfit {

namespace {

using detail::json;
using detail::require;

constexpr std::string_view kSchema = "flame.estimators/1";

json to_json(const RegressionTree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
  }
  return nodes;
}

RegressionTree tree_from_json(const json& j) {
  RegressionTree tree;
  for (const auto& n : j) {
    if (!n.is_array() || n.size() != 5) throw ValidationError("tree node needs 5 fields");
    tree.nodes.push_back(TreeNode{n[0].get<int>(), n[1].get<double>(), n[2].get<int>(),
                                  n[3].get<int>(), n[4].get<double>()});
  }
  const auto count = static_cast<int>(tree.nodes.size());
  if (count == 0) throw ValidationError("empty regression tree");
  for (const auto& n : tree.nodes) {
    if (n.feature >= 0 && (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count)) {
      throw ValidationError("tree node child index out of range");
    }
  }
  return tree;
}

json to_json(const TargetRegressor& r) {
  json j{{"kind", to_string(r.kind)},
         {"transform", to_string(r.transform)},
         {"intercept", r.intercept}};
  if (r.kind == RegressorKind::kLogLinear) {
    j["terms"] = r.terms;
    j["weights"] = r.weights;
    j["scale"] = r.scale;
    j["anchors"] = r.anchors;
    j["residuals"] = r.residuals;
    j["neighbors"] = r.neighbors;
  } else {
    j["shrinkage"] = r.shrinkage;
    json trees = json::array();
    for (const auto& t : r.trees) trees.push_back(to_json(t));
    j["trees"] = trees;
  }
  return j;
}

TargetRegressor regressor_from_json(const json& j, std::size_t inputs) {
  TargetRegressor r;
  r.kind = parse_regressor_kind(require(j, "kind").get<std::string>());
  r.transform = parse_target_transform(require(j, "transform").get<std::string>());
  r.intercept = require(j, "intercept").get<double>();
  if (r.kind == RegressorKind::kLogLinear) {
    r.terms = require(j, "terms").get<std::vector<std::size_t>>();
    r.weights = require(j, "weights").get<std::vector<double>>();
    r.scale = require(j, "scale").get<std::vector<double>>();
    r.anchors = require(j, "anchors").get<std::vector<std::vector<double>>>();
    r.residuals = require(j, "residuals").get<std::vector<double>>();
    r.neighbors = require(j, "neighbors").get<std::size_t>();
    if (r.terms.size() != r.weights.size()) throw ValidationError("terms and weights differ in length");
    for (auto t : r.terms) {
      if (t >= 2 * inputs) throw ValidationError("regressor term index out of range");
    }
    if (r.anchors.size() != r.residuals.size()) {
      throw ValidationError("anchors and residuals differ in length");
    }
    if (!r.anchors.empty() && r.scale.size() != inputs) {
      throw ValidationError("regressor scale has the wrong length");
    }
    for (const auto& a : r.anchors) {
      if (a.size() != inputs) throw ValidationError("regressor anchor has the wrong length");
    }
  } else {
    r.shrinkage = require(j, "shrinkage").get<double>();
    for (const auto& t : require(j, "trees")) {
      r.trees.push_back(tree_from_json(t));
      for (const auto& n : r.trees.back().nodes) {
        if (n.feature >= static_cast<int>(inputs)) {
          throw ValidationError("tree feature index out of range");
        }
      }
    }
  }
  return r;
}

json to_json(const FeatureSelection& s) {
  return json{{"indices", s.indices}, {"scores", s.scores}, {"names", s.names}};
}

FeatureSelection selection_from_json(const json& j, LayerType type) {
  FeatureSelection s;
  s.type = type;
  s.indices = require(j, "indices").get<std::vector<std::size_t>>();
  s.scores = require(j, "scores").get<std::vector<double>>();
  s.names = require(j, "names").get<std::vector<std::string>>();
  const auto raw = raw_feature_names(type).size();
  if (s.indices.size() != s.scores.size() || s.indices.size() != s.names.size() ||
      s.indices.size() > kWorkloadFeatureCount) {
    throw ValidationError("feature selector fields differ in length");
  }
  for (auto i : s.indices) {
    if (i >= raw) throw ValidationError("feature index out of range");
  }
  return s;
}

json to_json(const LayerTypeEstimator& e) {
  json training = json::array();
  for (const auto& t : e.training) {
    training.push_back({{"config", detail::to_json(t.config)},
                        {"coefficients", detail::to_json(t.coefficients.law)},
                        {"fit_residual_ms", t.coefficients.fit_residual_ms}});
  }
  json parser = json::array();
  for (const auto& p : e.parser) parser.push_back(to_json(p));
  json coeffs = json::object();
  for (std::size_t i = 0; i < e.coefficient_regressors.size(); ++i) {
    coeffs[std::string(kCoefficientNames[i])] = to_json(e.coefficient_regressors[i]);
  }
  return json{{"feature_selector", to_json(e.selector)},
              {"config_parser", parser},
              {"coefficient_regressors", coeffs},
              {"training", training}};
}

LayerTypeEstimator estimator_from_json(const json& j, LayerType type,
                                       const FrequencyGrid& grid) {
  LayerTypeEstimator e;
  e.layer_type = type;
  e.cpu_levels = grid.cpu_levels();
  e.selector = selection_from_json(require(j, "feature_selector"), type);
  const auto raw = raw_feature_names(type).size();
  for (const auto& p : require(j, "config_parser")) e.parser.push_back(regressor_from_json(p, raw));
  const auto& coeffs = require(j, "coefficient_regressors");
  if (!coeffs.empty()) {
    for (auto name : kCoefficientNames) {
      e.coefficient_regressors.push_back(
          regressor_from_json(require(coeffs, name), kWorkloadFeatureCount));
    }
  }
  for (const auto& t : require(j, "training")) {
    TrainingEntry entry;
    entry.config = detail::layer_config_from_json(require(t, "config"));
    validate_layer_config(entry.config);
    if (entry.config.layer_type != type) {
      throw ValidationError("training config type does not match its estimator");
    }
    entry.coefficients.law = detail::latency_law_from_json(require(t, "coefficients"));
    entry.coefficients.fit_residual_ms = require(t, "fit_residual_ms").get<double>();
    e.training.push_back(std::move(entry));
  }
  std::sort(e.training.begin(), e.training.end(),
            [](const TrainingEntry& a, const TrainingEntry& b) { return a.config < b.config; });
  return e;
}

}  // namespace

const LayerTypeEstimator& EstimatorStore::at(LayerType type) const {
  auto it = estimators.find(type);
  if (it == estimators.end()) {
    throw FitError("no trained estimator for layer type " + std::string(to_string(type)));
  }
  return it->second;
}

EstimatorStore fit_estimator_store(const profiler::ProfileDataset& dataset,
                                   const EstimatorOptions& options) {
  EstimatorStore store{dataset.device_id, dataset.grid, {}};
  for (auto type : kAllLayerTypes) {
    const bool present = std::any_of(dataset.samples.begin(), dataset.samples.end(),
                                     [&](const ProfileSample& s) { return s.layer_config.layer_type == type; });
    if (present) store.estimators.emplace(type, build_layer_estimator(dataset, type, options));
  }
  if (store.estimators.empty()) throw FitError("dataset has no samples to fit");
  return store;
}

std::string estimator_store_to_json(const EstimatorStore& store) {
  json types = json::object();
  for (const auto& [type, est] : store.estimators) {
    types[std::string(to_string(type))] = to_json(est);
  }
  json j{{"schema", kSchema},
         {"device_id", store.device_id},
         {"units", {{"frequency", "GHz"}, {"time", "ms"}}},
         {"grid", detail::to_json(store.grid)},
         {"layer_types", types}};
  return j.dump(2) + "\n";
}

EstimatorStore parse_estimator_store(std::string_view json_text) {
  const json j = detail::parse_json(json_text);
  try {
    const auto schema = require(j, "schema").get<std::string>();
    if (schema != kSchema) {
      throw ValidationError("unsupported estimator schema \"" + schema + "\"");
    }
    EstimatorStore store{require(j, "device_id").get<std::string>(),
                         detail::grid_from_json(require(j, "grid")),
                         {}};
    for (const auto& [name, value] : require(j, "layer_types").items()) {
      const LayerType type = parse_layer_type(name);
      store.estimators.emplace(type, estimator_from_json(value, type, store.grid));
    }
    return store;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed estimator store: ") + e.what());
  }
}

EstimatorStore load_estimator_store(const std::filesystem::path& path) {
  return parse_estimator_store(io::read_text_file(path));
}

void save_estimator_store(const EstimatorStore& store, const std::filesystem::path& path) {
  io::write_file_atomic(path, estimator_store_to_json(store));
}

}  // namespace flame::layerfit
