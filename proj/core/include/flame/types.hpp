#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Shared domain types. Units are fixed across the project:
// frequencies in GHz, durations in ms, power in W.
namespace flame {

// A positive operating frequency in GHz.
class Frequency {
 public:
  explicit Frequency(double ghz);

  double ghz() const noexcept { return ghz_; }
  double inverse() const noexcept { return 1.0 / ghz_; }

  friend auto operator<=>(const Frequency&, const Frequency&) = default;

 private:
  double ghz_;
};

struct FrequencyPair {
  Frequency f_c;
  Frequency f_g;
};

// Discrete CPU and GPU operating levels of a device, each strictly ascending.
class FrequencyGrid {
 public:
  FrequencyGrid(std::vector<Frequency> cpu_levels,
                std::vector<Frequency> gpu_levels);

  // Evenly spaced levels, rounded to 1 kHz so they print cleanly.
  static FrequencyGrid uniform(double cpu_min, double cpu_max, std::size_t cpu_count,
                               double gpu_min, double gpu_max, std::size_t gpu_count);

  const std::vector<Frequency>& cpu_levels() const noexcept { return cpu_; }
  const std::vector<Frequency>& gpu_levels() const noexcept { return gpu_; }

  Frequency cpu_min() const { return cpu_.front(); }
  Frequency cpu_max() const { return cpu_.back(); }
  Frequency gpu_min() const { return gpu_.front(); }
  Frequency gpu_max() const { return gpu_.back(); }

  std::optional<std::size_t> cpu_index(Frequency f) const;
  std::optional<std::size_t> gpu_index(Frequency f) const;
  bool contains(Frequency f_c, Frequency f_g) const;

  // Nearest CPU level to an arbitrary frequency; ties go to the lower level.
  Frequency snap_cpu(double ghz) const;

  // CPU-major ascending enumeration of every pair.
  std::vector<FrequencyPair> pairs() const;

  friend bool operator==(const FrequencyGrid&, const FrequencyGrid&) = default;

 private:
  std::vector<Frequency> cpu_;
  std::vector<Frequency> gpu_;
};

std::size_t frequency_pair_count(const FrequencyGrid& grid);

enum class LayerType { kConvolution, kLinear, kTransformer };

inline constexpr std::array<LayerType, 3> kAllLayerTypes = {
    LayerType::kConvolution, LayerType::kLinear, LayerType::kTransformer};

std::string_view to_string(LayerType type);
LayerType parse_layer_type(std::string_view name);

// Required parameter keys of each layer type.
const std::vector<std::string>& required_params(LayerType type);

namespace param {
inline constexpr std::string_view kInputHeight = "input_height";
inline constexpr std::string_view kInputWidth = "input_width";
inline constexpr std::string_view kInputChannels = "input_channels";
inline constexpr std::string_view kOutputChannels = "output_channels";
inline constexpr std::string_view kKernelSize = "kernel_size";
inline constexpr std::string_view kStride = "stride";
inline constexpr std::string_view kInputFeatures = "input_features";
inline constexpr std::string_view kOutputFeatures = "output_features";
inline constexpr std::string_view kEmbedDim = "embed_dim";
inline constexpr std::string_view kNumHeads = "num_heads";
inline constexpr std::string_view kContextLength = "context_length";
}  // namespace param

// Static hyperparameters of one layer. std::map keeps key order normalized.
struct LayerConfig {
  LayerType layer_type = LayerType::kLinear;
  std::map<std::string, std::int64_t, std::less<>> params;

  std::int64_t at(std::string_view key) const;

  // Context length for transformer layers, 0 for every other type.
  std::int64_t context() const;
  LayerConfig with_context(std::int64_t context_length) const;

  // Stable single-line JSON, used as the identity of a config in files.
  std::string canonical_json() const;

  friend auto operator<=>(const LayerConfig&, const LayerConfig&) = default;
  friend bool operator==(const LayerConfig&, const LayerConfig&) = default;
};

LayerConfig make_convolution(std::int64_t input_height, std::int64_t input_width,
                             std::int64_t input_channels, std::int64_t output_channels,
                             std::int64_t kernel_size, std::int64_t stride);
LayerConfig make_linear(std::int64_t input_features, std::int64_t output_features);
LayerConfig make_transformer(std::int64_t embed_dim, std::int64_t num_heads,
                             std::int64_t context_length);

// Throws ValidationError if a required key is missing, an unknown key is
// present, or a value is not positive.
void validate_layer_config(const LayerConfig& config);

struct ModelSpec {
  std::string name;
  std::vector<LayerConfig> layers;  // execution order

  // Copy with every transformer layer set to the given context length.
  ModelSpec with_context(std::int64_t context_length) const;
  bool has_transformer() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Returns the spec unchanged if every layer is valid. Errors name the first
// offending layer index and key.
ModelSpec validate_model_spec(const ModelSpec& spec);

// One branch of the interaction factor: k_c / f_c + k_g / f_g + b.
struct DeltaBranch {
  double k_c = 0.0;
  double k_g = 0.0;
  double b = 0.0;

  double eval(Frequency f_c, Frequency f_g) const noexcept {
    return k_c * f_c.inverse() + k_g * f_g.inverse() + b;
  }

  friend bool operator==(const DeltaBranch&, const DeltaBranch&) = default;
};

// Per-layer latency law: independent processor times k / f + b, and the
// piecewise interaction factor switching on the CPU saturation frequency.
struct LatencyLaw {
  double k_c = 0.0;  // GHz*ms
  double b_c = 0.0;  // ms
  double k_g = 0.0;  // GHz*ms
  double b_g = 0.0;  // ms
  DeltaBranch unsaturated;
  DeltaBranch saturated;
  Frequency breakpoint{1.0};

  double cpu_ms(Frequency f_c) const noexcept { return k_c * f_c.inverse() + b_c; }
  double gpu_ms(Frequency f_g) const noexcept { return k_g * f_g.inverse() + b_g; }

  // f_c exactly at the breakpoint belongs to the unsaturated branch.
  bool is_saturated(Frequency f_c) const noexcept { return f_c > breakpoint; }

  double delta_ms(Frequency f_c, Frequency f_g) const noexcept {
    return is_saturated(f_c) ? saturated.eval(f_c, f_g) : unsaturated.eval(f_c, f_g);
  }

  double total_ms(Frequency f_c, Frequency f_g) const noexcept {
    return cpu_ms(f_c) + gpu_ms(f_g) + delta_ms(f_c, f_g);
  }

  friend bool operator==(const LatencyLaw&, const LatencyLaw&) = default;
};

// Start/end timestamps of one layer on both processors (ms).
struct LayerSpan {
  double cpu_start_ms = 0.0;
  double cpu_end_ms = 0.0;
  double gpu_start_ms = 0.0;
  double gpu_end_ms = 0.0;
};

inline constexpr std::size_t kWorkloadFeatureCount = 10;

// Workload fingerprint standing in for the top hardware counters of a layer.
struct WorkloadFeatures {
  std::array<double, kWorkloadFeatureCount> values{};
  std::vector<std::string> names;

  void validate() const;
  friend bool operator==(const WorkloadFeatures&, const WorkloadFeatures&) = default;
};

inline constexpr double kSampleTotalTolerance = 1e-6;

// One averaged profiling point. delta is signed.
struct ProfileSample {
  LayerConfig layer_config;
  Frequency f_c{1.0};
  Frequency f_g{1.0};
  double cpu_ms = 0.0;
  double gpu_ms = 0.0;
  double delta_ms = 0.0;
  double total_ms = 0.0;
  std::optional<WorkloadFeatures> features;

  // Builds a sample with total = cpu + gpu + delta.
  static ProfileSample record(LayerConfig config, Frequency f_c, Frequency f_g,
                              double cpu_ms, double gpu_ms, double delta_ms);

  // Throws ValidationError when durations are negative or the total does not
  // decompose within kSampleTotalTolerance.
  void validate() const;

  friend bool operator==(const ProfileSample&, const ProfileSample&) = default;
};

}  // namespace flame
