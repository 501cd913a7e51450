#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "flame/devicesim.hpp"
#include "flame/types.hpp"

namespace flame::profiler {

struct SamplingPlan {
  int cpu_stride = 4;
  int gpu_stride = 4;
  int context_stride = 90;  // transformer layers only
  int iterations = 1;
  int context_max = 1024;

  void validate() const;
  friend bool operator==(const SamplingPlan&, const SamplingPlan&) = default;
};

// Indices {0, s, 2s, ...} plus the last index.
std::vector<std::size_t> strided_indices(std::size_t count, int stride);

// Cartesian product of the strided CPU and GPU levels, CPU-major.
std::vector<FrequencyPair> plan_points(const FrequencyGrid& grid, const SamplingPlan& plan);

// {1, 1 + s, 1 + 2s, ...} plus context_max.
std::vector<std::int64_t> context_points(const SamplingPlan& plan);

struct ProfileDataset {
  std::string device_id;
  FrequencyGrid grid;
  SamplingPlan plan;
  std::string created_at;
  bool complete = true;
  std::string failure;  // set when complete == false
  std::vector<ProfileSample> samples;
  // Names of the recorded workload features per layer type.
  std::map<LayerType, std::vector<std::string>> feature_names;

  // Distinct configs of one type in first-appearance order.
  std::vector<LayerConfig> configs(LayerType type) const;
};

// Checks on-grid frequencies, unique (config, f_c, f_g) keys, and per-sample
// invariants. Errors name the sample index.
void validate_dataset(const ProfileDataset& dataset);

// Something that can run one layer at one frequency pair.
class ProfileSource {
 public:
  virtual ~ProfileSource() = default;
  virtual std::string device_id() const = 0;
  virtual ProfileSample measure(const LayerConfig& config, Frequency f_c, Frequency f_g) = 0;
};

class SimulatorSource final : public ProfileSource {
 public:
  explicit SimulatorSource(devicesim::DeviceSimulator& simulator) : sim_(simulator) {}
  std::string device_id() const override { return sim_.config().device_id; }
  ProfileSample measure(const LayerConfig& config, Frequency f_c, Frequency f_g) override;

 private:
  devicesim::DeviceSimulator& sim_;
};

// Replays previously recorded samples; missing points are a source failure.
class TraceSource final : public ProfileSource {
 public:
  explicit TraceSource(const ProfileDataset& recorded);
  std::string device_id() const override { return device_id_; }
  ProfileSample measure(const LayerConfig& config, Frequency f_c, Frequency f_g) override;

 private:
  std::string device_id_;
  std::map<std::tuple<LayerConfig, double, double>, ProfileSample> samples_;
};

// Profiles every config at every planned pair, averaging `iterations` runs
// field by field. Transformer configs are swept over context_points(plan).
// A throwing source stops the campaign and returns what was collected with
// complete = false.
ProfileDataset run_campaign(ProfileSource& source, const std::vector<LayerConfig>& configs,
                            const FrequencyGrid& grid, const SamplingPlan& plan);

// Attaches workload features to every sample (top-ranked analytic features
// per layer type) and records their names.
void attach_features(ProfileDataset& dataset);

// Samples go to `path` as CSV; plan and metadata go to the sidecar.
std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);
std::string dataset_csv(const ProfileDataset& dataset);
std::string dataset_metadata_json(const ProfileDataset& dataset);
void save_dataset(const ProfileDataset& dataset, const std::filesystem::path& path);

ProfileDataset parse_dataset(std::string_view csv_text, std::string_view metadata_json);
ProfileDataset load_dataset(const std::filesystem::path& path);

}  // namespace flame::profiler
