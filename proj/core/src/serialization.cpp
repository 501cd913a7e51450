#include "flame/serialization.hpp"

#include "flame/io.hpp"
#include "json_convert.hpp"

namespace flame {
namespace detail {

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), e.byte);
  }
}

const json& require(const json& j, std::string_view key) {
  if (!j.is_object()) throw ValidationError("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError("missing key \"" + std::string(key) + "\"");
  }
  return *it;
}

json to_json(const LayerConfig& config) {
  json params = json::object();
  for (const auto& [k, v] : config.params) params[k] = v;
  return json{{"layer_type", std::string(to_string(config.layer_type))}, {"params", params}};
}

LayerConfig layer_config_from_json(const json& j) {
  LayerConfig c;
  try {
    c.layer_type = parse_layer_type(require(j, "layer_type").get<std::string>());
    const json& params = require(j, "params");
    if (!params.is_object()) throw ValidationError("\"params\" must be an object");
    for (const auto& [k, v] : params.items()) {
      if (!v.is_number_integer()) {
        throw ValidationError("key \"" + k + "\" must be an integer");
      }
      c.params[k] = v.get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed layer: ") + e.what());
  }
  return c;
}

json to_json(const ModelSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(to_json(l));
  return json{{"name", spec.name}, {"layers", layers}};
}

ModelSpec model_spec_from_json(const json& j) {
  ModelSpec spec;
  try {
    spec.name = require(j, "name").get<std::string>();
    const json& layers = require(j, "layers");
    if (!layers.is_array()) throw ValidationError("\"layers\" must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      try {
        spec.layers.push_back(layer_config_from_json(layers[i]));
      } catch (const ValidationError& e) {
        throw ValidationError("layer " + std::to_string(i) + ": " + e.what());
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model spec: ") + e.what());
  }
  return spec;
}

json to_json(const FrequencyGrid& grid) {
  json cpu = json::array();
  json gpu = json::array();
  for (auto f : grid.cpu_levels()) cpu.push_back(f.ghz());
  for (auto f : grid.gpu_levels()) gpu.push_back(f.ghz());
  return json{{"cpu_ghz", cpu}, {"gpu_ghz", gpu}};
}

FrequencyGrid grid_from_json(const json& j) {
  auto levels = [&](std::string_view key) {
    const json& arr = require(j, key);
    if (!arr.is_array()) throw ValidationError("\"" + std::string(key) + "\" must be an array");
    std::vector<Frequency> out;
    for (const auto& v : arr) {
      if (!v.is_number()) throw ValidationError("frequency levels must be numbers");
      out.emplace_back(v.get<double>());
    }
    return out;
  };
  return FrequencyGrid(levels("cpu_ghz"), levels("gpu_ghz"));
}

json to_json(const DeltaBranch& branch) {
  return json{{"k_c", branch.k_c}, {"k_g", branch.k_g}, {"b", branch.b}};
}

DeltaBranch delta_branch_from_json(const json& j) {
  return DeltaBranch{require(j, "k_c").get<double>(), require(j, "k_g").get<double>(),
                     require(j, "b").get<double>()};
}

json to_json(const LatencyLaw& law) {
  return json{{"k_c", law.k_c},
              {"b_c", law.b_c},
              {"k_g", law.k_g},
              {"b_g", law.b_g},
              {"delta_uns", to_json(law.unsaturated)},
              {"delta_sat", to_json(law.saturated)},
              {"breakpoint_ghz", law.breakpoint.ghz()}};
}

LatencyLaw latency_law_from_json(const json& j) {
  LatencyLaw law;
  law.k_c = require(j, "k_c").get<double>();
  law.b_c = require(j, "b_c").get<double>();
  law.k_g = require(j, "k_g").get<double>();
  law.b_g = require(j, "b_g").get<double>();
  law.unsaturated = delta_branch_from_json(require(j, "delta_uns"));
  law.saturated = delta_branch_from_json(require(j, "delta_sat"));
  law.breakpoint = Frequency(require(j, "breakpoint_ghz").get<double>());
  return law;
}

}  // namespace detail

std::string model_spec_to_json(const ModelSpec& spec) {
  return detail::to_json(spec).dump(2) + "\n";
}

ModelSpec parse_model_spec(std::string_view json_text) {
  return validate_model_spec(detail::model_spec_from_json(detail::parse_json(json_text)));
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  return parse_model_spec(io::read_text_file(path));
}

std::string grid_to_json(const FrequencyGrid& grid) {
  return detail::to_json(grid).dump(2) + "\n";
}

FrequencyGrid parse_grid(std::string_view json_text) {
  return detail::grid_from_json(detail::parse_json(json_text));
}

LayerConfig parse_layer_config(std::string_view json_text) {
  LayerConfig c = detail::layer_config_from_json(detail::parse_json(json_text));
  validate_layer_config(c);
  return c;
}

}  // namespace flame
