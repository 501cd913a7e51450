#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "flame/types.hpp"

// Synthetic asynchronous CPU-GPU device. Each layer gets a hidden latency law
// derived from its workload; the simulator then produces jittered timings,
// queues GPU work behind the previous kernel, and reports power.
namespace flame::devicesim {

// P = p_static + a_c * f_c^3 + a_g * f_g^3
struct PowerModel {
  double p_static_w = 5.0;
  double a_c = 0.4;  // W / GHz^3
  double a_g = 6.0;  // W / GHz^3

  void validate() const;
  friend bool operator==(const PowerModel&, const PowerModel&) = default;
};

double power_watts(const PowerModel& power, double f_c_ghz, double f_g_ghz);
double measure_power(const PowerModel& power, Frequency f_c, Frequency f_g);

// Exponents of the k_c = theta_c * MACs^cpu and k_g = theta_g * MACs^gpu laws.
struct LawExponents {
  double cpu = 0.35;
  double gpu = 0.95;
  friend bool operator==(const LawExponents&, const LawExponents&) = default;
};

struct DeviceConfig {
  std::string device_id = "sim";
  FrequencyGrid grid;
  PowerModel power;
  double jitter_sigma = 0.0;  // log-normal sigma, unitless
  std::uint64_t coefficient_seed = 0;
  std::map<LayerType, LawExponents> feature_law_exponents;

  void validate() const;
  LawExponents exponents(LayerType type) const;
  friend bool operator==(const DeviceConfig&, const DeviceConfig&) = default;
};

std::map<LayerType, LawExponents> default_law_exponents();

struct DeviceOptions {
  std::size_t cpu_levels = 29;
  std::size_t gpu_levels = 11;
  double cpu_min_ghz = 0.1;
  double cpu_max_ghz = 2.2;
  double gpu_min_ghz = 0.3;
  double gpu_max_ghz = 1.3;
  double jitter_sigma = 0.03;
};

// Deterministic in (seed, options): power coefficients are drawn from fixed
// ranges with the seed, which also becomes the coefficient seed.
DeviceConfig make_device(std::uint64_t seed, const DeviceOptions& options = {});

std::string device_to_json(const DeviceConfig& device);
DeviceConfig parse_device(std::string_view json_text);
DeviceConfig load_device(const std::filesystem::path& path);

using GroundTruthLayerModel = LatencyLaw;

// Hidden law of one layer. Deterministic in (config, coefficient_seed).
GroundTruthLayerModel generate_ground_truth(const LayerConfig& config,
                                            const DeviceConfig& device);

// One noisy run of a layer in isolation. Throws ValidationError for
// frequencies off the device grid.
ProfileSample simulate_layer(const GroundTruthLayerModel& model, const LayerConfig& config,
                             const DeviceConfig& device, Frequency f_c, Frequency f_g,
                             std::mt19937_64& rng);

struct SimTrace {
  std::vector<LayerSpan> layers;
  double total_latency_ms = 0.0;
  double avg_power_w = 0.0;
};

// Runs a whole model: CPU back to back, each kernel starts when both its
// dispatch is ready (cpu_end + delta) and the GPU is free. A load factor
// stretches every CPU and GPU duration by (1 + load).
SimTrace simulate_model(const ModelSpec& spec, Frequency f_c, Frequency f_g,
                        const DeviceConfig& device, std::optional<double> load_factor,
                        std::mt19937_64& rng);

// CSV: layer,cpu_start_ms,cpu_end_ms,gpu_start_ms,gpu_end_ms
std::string spans_to_csv(const std::vector<LayerSpan>& spans);

// A device instance with its own RNG and a cache of generated layer laws.
// Not thread-safe; use one instance per caller.
class DeviceSimulator {
 public:
  DeviceSimulator(DeviceConfig config, std::uint64_t rng_seed);

  const DeviceConfig& config() const noexcept { return config_; }
  const GroundTruthLayerModel& ground_truth(const LayerConfig& layer);

  ProfileSample simulate_layer(const LayerConfig& layer, Frequency f_c, Frequency f_g);
  SimTrace simulate_model(const ModelSpec& spec, Frequency f_c, Frequency f_g,
                          std::optional<double> load_factor = std::nullopt);

  // Jitter-free total latency of the model.
  double noiseless_total_ms(const ModelSpec& spec, Frequency f_c, Frequency f_g);

 private:
  DeviceConfig config_;
  DeviceConfig noiseless_;
  std::mt19937_64 rng_;
  std::map<LayerConfig, GroundTruthLayerModel> laws_;
};

}  // namespace flame::devicesim
