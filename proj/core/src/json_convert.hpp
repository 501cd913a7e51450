#pragma once

// nlohmann/json conversions shared by the library's .cpp files. Not installed.

#include <json.hpp>
#include <string_view>

#include "flame/error.hpp"
#include "flame/types.hpp"

namespace flame::detail {

using nlohmann::json;

json to_json(const LayerConfig& config);
LayerConfig layer_config_from_json(const json& j);

json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j);

json to_json(const FrequencyGrid& grid);
FrequencyGrid grid_from_json(const json& j);

json to_json(const DeltaBranch& branch);
DeltaBranch delta_branch_from_json(const json& j);

json to_json(const LatencyLaw& law);
LatencyLaw latency_law_from_json(const json& j);

// Parses text, translating nlohmann errors into ParseError with byte offset.
json parse_json(std::string_view text);

// Member access with a ValidationError naming the missing key.
const json& require(const json& j, std::string_view key);

}  // namespace flame::detail
