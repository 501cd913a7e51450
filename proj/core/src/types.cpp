#include "flame/types.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flame/error.hpp"

namespace flame {

Frequency::Frequency(double ghz) : ghz_(ghz) {
  if (!std::isfinite(ghz) || ghz <= 0.0) {
    throw ValidationError("frequency must be a positive finite GHz value, got " +
                          std::to_string(ghz));
  }
}

namespace {

void check_levels(const std::vector<Frequency>& levels, const char* axis) {
  if (levels.empty()) {
    throw ValidationError(std::string(axis) + " frequency levels are empty");
  }
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i - 1] < levels[i])) {
      throw ValidationError(std::string(axis) +
                            " frequency levels must be strictly ascending (index " +
                            std::to_string(i) + ")");
    }
  }
}

std::optional<std::size_t> find_level(const std::vector<Frequency>& levels, Frequency f) {
  auto it = std::lower_bound(levels.begin(), levels.end(), f);
  if (it != levels.end() && *it == f) {
    return static_cast<std::size_t>(it - levels.begin());
  }
  return std::nullopt;
}

std::vector<Frequency> uniform_levels(double lo, double hi, std::size_t count) {
  if (count == 0) throw ValidationError("level count must be positive");
  std::vector<Frequency> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double v = count == 1 ? hi : lo + (hi - lo) * static_cast<double>(i) /
                                          static_cast<double>(count - 1);
    out.emplace_back(std::round(v * 1e6) / 1e6);
  }
  return out;
}

}  // namespace

FrequencyGrid::FrequencyGrid(std::vector<Frequency> cpu_levels,
                             std::vector<Frequency> gpu_levels)
    : cpu_(std::move(cpu_levels)), gpu_(std::move(gpu_levels)) {
  check_levels(cpu_, "CPU");
  check_levels(gpu_, "GPU");
}

FrequencyGrid FrequencyGrid::uniform(double cpu_min, double cpu_max, std::size_t cpu_count,
                                     double gpu_min, double gpu_max, std::size_t gpu_count) {
  return FrequencyGrid(uniform_levels(cpu_min, cpu_max, cpu_count),
                       uniform_levels(gpu_min, gpu_max, gpu_count));
}

std::optional<std::size_t> FrequencyGrid::cpu_index(Frequency f) const {
  return find_level(cpu_, f);
}

std::optional<std::size_t> FrequencyGrid::gpu_index(Frequency f) const {
  return find_level(gpu_, f);
}

bool FrequencyGrid::contains(Frequency f_c, Frequency f_g) const {
  return cpu_index(f_c).has_value() && gpu_index(f_g).has_value();
}

Frequency FrequencyGrid::snap_cpu(double ghz) const {
  Frequency best = cpu_.front();
  double best_dist = std::abs(best.ghz() - ghz);
  for (const auto& level : cpu_) {
    double d = std::abs(level.ghz() - ghz);
    if (d < best_dist) {
      best = level;
      best_dist = d;
    }
  }
  return best;
}

std::vector<FrequencyPair> FrequencyGrid::pairs() const {
  std::vector<FrequencyPair> out;
  out.reserve(cpu_.size() * gpu_.size());
  for (const auto& c : cpu_) {
    for (const auto& g : gpu_) out.push_back({c, g});
  }
  return out;
}

std::size_t frequency_pair_count(const FrequencyGrid& grid) {
  return grid.cpu_levels().size() * grid.gpu_levels().size();
}

std::string_view to_string(LayerType type) {
  switch (type) {
    case LayerType::kConvolution: return "convolution";
    case LayerType::kLinear: return "linear";
    case LayerType::kTransformer: return "transformer";
  }
  return "unknown";
}

LayerType parse_layer_type(std::string_view name) {
  for (auto t : kAllLayerTypes) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("unknown layer_type \"" + std::string(name) + "\"");
}

const std::vector<std::string>& required_params(LayerType type) {
  static const std::vector<std::string> conv = {
      std::string(param::kInputHeight),    std::string(param::kInputWidth),
      std::string(param::kInputChannels),  std::string(param::kOutputChannels),
      std::string(param::kKernelSize),     std::string(param::kStride)};
  static const std::vector<std::string> linear = {std::string(param::kInputFeatures),
                                                  std::string(param::kOutputFeatures)};
  static const std::vector<std::string> transformer = {std::string(param::kEmbedDim),
                                                       std::string(param::kNumHeads),
                                                       std::string(param::kContextLength)};
  switch (type) {
    case LayerType::kConvolution: return conv;
    case LayerType::kLinear: return linear;
    case LayerType::kTransformer: return transformer;
  }
  return linear;
}

std::int64_t LayerConfig::at(std::string_view key) const {
  auto it = params.find(key);
  if (it == params.end()) {
    throw ValidationError("missing key \"" + std::string(key) + "\"");
  }
  return it->second;
}

std::int64_t LayerConfig::context() const {
  if (layer_type != LayerType::kTransformer) return 0;
  return at(param::kContextLength);
}

LayerConfig LayerConfig::with_context(std::int64_t context_length) const {
  LayerConfig out = *this;
  if (layer_type == LayerType::kTransformer) {
    out.params[std::string(param::kContextLength)] = context_length;
  }
  return out;
}

std::string LayerConfig::canonical_json() const {
  std::ostringstream os;
  os << "{\"layer_type\":\"" << to_string(layer_type) << "\",\"params\":{";
  bool first = true;
  for (const auto& [k, v] : params) {
    if (!first) os << ',';
    first = false;
    os << '"' << k << "\":" << v;
  }
  os << "}}";
  return os.str();
}

LayerConfig make_convolution(std::int64_t input_height, std::int64_t input_width,
                             std::int64_t input_channels, std::int64_t output_channels,
                             std::int64_t kernel_size, std::int64_t stride) {
  LayerConfig c;
  c.layer_type = LayerType::kConvolution;
  c.params = {{std::string(param::kInputHeight), input_height},
              {std::string(param::kInputWidth), input_width},
              {std::string(param::kInputChannels), input_channels},
              {std::string(param::kOutputChannels), output_channels},
              {std::string(param::kKernelSize), kernel_size},
              {std::string(param::kStride), stride}};
  return c;
}

LayerConfig make_linear(std::int64_t input_features, std::int64_t output_features) {
  LayerConfig c;
  c.layer_type = LayerType::kLinear;
  c.params = {{std::string(param::kInputFeatures), input_features},
              {std::string(param::kOutputFeatures), output_features}};
  return c;
}

LayerConfig make_transformer(std::int64_t embed_dim, std::int64_t num_heads,
                             std::int64_t context_length) {
  LayerConfig c;
  c.layer_type = LayerType::kTransformer;
  c.params = {{std::string(param::kEmbedDim), embed_dim},
              {std::string(param::kNumHeads), num_heads},
              {std::string(param::kContextLength), context_length}};
  return c;
}

void validate_layer_config(const LayerConfig& config) {
  const auto& required = required_params(config.layer_type);
  for (const auto& key : required) {
    auto it = config.params.find(key);
    if (it == config.params.end()) {
      throw ValidationError("missing key \"" + key + "\"");
    }
    if (it->second <= 0) {
      throw ValidationError("key \"" + key + "\" must be positive, got " +
                            std::to_string(it->second));
    }
  }
  for (const auto& [key, value] : config.params) {
    if (std::find(required.begin(), required.end(), key) == required.end()) {
      throw ValidationError("unknown key \"" + key + "\" for " +
                            std::string(to_string(config.layer_type)) + " layer");
    }
  }
}

ModelSpec ModelSpec::with_context(std::int64_t context_length) const {
  ModelSpec out = *this;
  for (auto& layer : out.layers) layer = layer.with_context(context_length);
  return out;
}

bool ModelSpec::has_transformer() const {
  return std::any_of(layers.begin(), layers.end(), [](const LayerConfig& l) {
    return l.layer_type == LayerType::kTransformer;
  });
}

ModelSpec validate_model_spec(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ValidationError("empty model");
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    try {
      validate_layer_config(spec.layers[i]);
    } catch (const ValidationError& e) {
      throw ValidationError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return spec;
}

void WorkloadFeatures::validate() const {
  if (!names.empty() && names.size() != kWorkloadFeatureCount) {
    throw ValidationError("workload features need exactly " +
                          std::to_string(kWorkloadFeatureCount) + " names");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ValidationError("workload feature values must be finite and non-negative");
    }
  }
}

ProfileSample ProfileSample::record(LayerConfig config, Frequency f_c, Frequency f_g,
                                    double cpu_ms, double gpu_ms, double delta_ms) {
  ProfileSample s;
  s.layer_config = std::move(config);
  s.f_c = f_c;
  s.f_g = f_g;
  s.cpu_ms = cpu_ms;
  s.gpu_ms = gpu_ms;
  s.delta_ms = delta_ms;
  s.total_ms = cpu_ms + gpu_ms + delta_ms;
  return s;
}

void ProfileSample::validate() const {
  if (!(cpu_ms >= 0.0) || !(gpu_ms >= 0.0)) {
    throw ValidationError("sample durations must be non-negative");
  }
  if (!std::isfinite(delta_ms) || !std::isfinite(total_ms)) {
    throw ValidationError("sample durations must be finite");
  }
  if (std::abs(total_ms - (cpu_ms + gpu_ms + delta_ms)) > kSampleTotalTolerance) {
    throw ValidationError("sample total does not equal cpu + gpu + delta");
  }
  if (features) features->validate();
}

}  // namespace flame
