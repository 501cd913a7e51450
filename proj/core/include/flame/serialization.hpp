#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "flame/types.hpp"

// JSON documents for the core types:
//   ModelSpec:     {"name": ..., "layers": [{"layer_type": ..., "params": {...}}]}
//   FrequencyGrid: {"cpu_ghz": [...], "gpu_ghz": [...]}
namespace flame {

std::string model_spec_to_json(const ModelSpec& spec);
ModelSpec parse_model_spec(std::string_view json_text);  // validated
ModelSpec load_model_spec(const std::filesystem::path& path);

std::string grid_to_json(const FrequencyGrid& grid);
FrequencyGrid parse_grid(std::string_view json_text);

LayerConfig parse_layer_config(std::string_view json_text);  // validated

}  // namespace flame
