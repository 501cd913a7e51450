#include "flame/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <set>
#include <tuple>

#include "flame/csv.hpp"
#include "flame/error.hpp"
#include "flame/features.hpp"
#include "flame/io.hpp"
#include "flame/serialization.hpp"
#include "json_convert.hpp"

namespace flame::profiler {

using detail::json;

namespace {

constexpr std::string_view kDatasetSchema = "flame.dataset/1";
constexpr std::size_t kFixedColumns = 9;
constexpr std::size_t kColumnCount = kFixedColumns + kWorkloadFeatureCount;

std::vector<std::string> header_columns() {
  std::vector<std::string> cols = {"layer_type", "config_json", "f_c_ghz", "f_g_ghz",
                                   "context",    "cpu_ms",      "gpu_ms",  "delta_ms",
                                   "total_ms"};
  for (std::size_t i = 0; i < kWorkloadFeatureCount; ++i) {
    cols.push_back("feature_" + std::to_string(i));
  }
  return cols;
}

// SOURCE_DATE_EPOCH pins the stamp for reproducible outputs.
std::string utc_timestamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char* end = nullptr;
    const long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0' && v >= 0) now = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

using SampleKey = std::tuple<LayerConfig, double, double>;

SampleKey key_of(const ProfileSample& s) { return {s.layer_config, s.f_c.ghz(), s.f_g.ghz()}; }

json plan_to_json(const SamplingPlan& p) {
  return json{{"cpu_stride", p.cpu_stride},       {"gpu_stride", p.gpu_stride},
              {"context_stride", p.context_stride}, {"iterations", p.iterations},
              {"context_max", p.context_max}};
}

SamplingPlan plan_from_json(const json& j) {
  SamplingPlan p;
  p.cpu_stride = detail::require(j, "cpu_stride").get<int>();
  p.gpu_stride = detail::require(j, "gpu_stride").get<int>();
  p.context_stride = detail::require(j, "context_stride").get<int>();
  p.iterations = detail::require(j, "iterations").get<int>();
  p.context_max = detail::require(j, "context_max").get<int>();
  p.validate();
  return p;
}

}  // namespace

void SamplingPlan::validate() const {
  if (cpu_stride < 1 || gpu_stride < 1 || context_stride < 1) {
    throw ValidationError("sampling strides must be >= 1");
  }
  if (iterations < 1) throw ValidationError("iterations must be >= 1");
  if (context_max < 1) throw ValidationError("context_max must be >= 1");
}

std::vector<std::size_t> strided_indices(std::size_t count, int stride) {
  if (stride < 1) throw ValidationError("stride must be >= 1");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < count; i += static_cast<std::size_t>(stride)) out.push_back(i);
  if (count > 0 && out.back() != count - 1) out.push_back(count - 1);
  return out;
}

std::vector<FrequencyPair> plan_points(const FrequencyGrid& grid, const SamplingPlan& plan) {
  plan.validate();
  const auto ci = strided_indices(grid.cpu_levels().size(), plan.cpu_stride);
  const auto gi = strided_indices(grid.gpu_levels().size(), plan.gpu_stride);
  std::vector<FrequencyPair> out;
  out.reserve(ci.size() * gi.size());
  for (auto c : ci) {
    for (auto g : gi) out.push_back({grid.cpu_levels()[c], grid.gpu_levels()[g]});
  }
  return out;
}

std::vector<std::int64_t> context_points(const SamplingPlan& plan) {
  plan.validate();
  std::vector<std::int64_t> out;
  for (std::int64_t c = 1; c <= plan.context_max; c += plan.context_stride) out.push_back(c);
  if (out.back() != plan.context_max) out.push_back(plan.context_max);
  return out;
}

std::vector<LayerConfig> ProfileDataset::configs(LayerType type) const {
  std::vector<LayerConfig> out;
  std::set<LayerConfig> seen;
  for (const auto& s : samples) {
    if (s.layer_config.layer_type != type) continue;
    if (seen.insert(s.layer_config).second) out.push_back(s.layer_config);
  }
  return out;
}

void validate_dataset(const ProfileDataset& dataset) {
  dataset.plan.validate();
  std::set<SampleKey> keys;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    const std::string where = "sample " + std::to_string(i) + ": ";
    try {
      validate_layer_config(s.layer_config);
      s.validate();
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    if (!dataset.grid.contains(s.f_c, s.f_g)) {
      throw ValidationError(where + "frequency pair (" + io::format_double(s.f_c.ghz()) + ", " +
                            io::format_double(s.f_g.ghz()) + ") GHz is off the device grid");
    }
    if (!keys.insert(key_of(s)).second) {
      throw ValidationError(where + "duplicate (config, f_c, f_g) key");
    }
  }
}

ProfileSample SimulatorSource::measure(const LayerConfig& config, Frequency f_c,
                                       Frequency f_g) {
  return sim_.simulate_layer(config, f_c, f_g);
}

TraceSource::TraceSource(const ProfileDataset& recorded) : device_id_(recorded.device_id) {
  for (const auto& s : recorded.samples) samples_.emplace(key_of(s), s);
}

ProfileSample TraceSource::measure(const LayerConfig& config, Frequency f_c, Frequency f_g) {
  auto it = samples_.find({config, f_c.ghz(), f_g.ghz()});
  if (it == samples_.end()) {
    throw IoError("trace has no sample for " + config.canonical_json() + " at (" +
                  io::format_double(f_c.ghz()) + ", " + io::format_double(f_g.ghz()) + ") GHz");
  }
  ProfileSample s = it->second;
  s.features.reset();
  return s;
}

ProfileDataset run_campaign(ProfileSource& source, const std::vector<LayerConfig>& configs,
                            const FrequencyGrid& grid, const SamplingPlan& plan) {
  plan.validate();
  ProfileDataset ds{.device_id = source.device_id(),
                    .grid = grid,
                    .plan = plan,
                    .created_at = utc_timestamp(),
                    .complete = true,
                    .failure = {},
                    .samples = {},
                    .feature_names = {}};

  // Expand transformer contexts and drop repeats, keeping first-seen order.
  std::vector<LayerConfig> expanded;
  std::set<LayerConfig> seen;
  const auto contexts = context_points(plan);
  for (const auto& c : configs) {
    validate_layer_config(c);
    if (c.layer_type == LayerType::kTransformer) {
      for (auto ctx : contexts) {
        auto v = c.with_context(ctx);
        if (seen.insert(v).second) expanded.push_back(std::move(v));
      }
    } else if (seen.insert(c).second) {
      expanded.push_back(c);
    }
  }

  const auto points = plan_points(grid, plan);
  const double n = static_cast<double>(plan.iterations);
  try {
    for (const auto& config : expanded) {
      for (const auto& [f_c, f_g] : points) {
        double cpu = 0.0, gpu = 0.0, delta = 0.0;
        for (int it = 0; it < plan.iterations; ++it) {
          ProfileSample s = source.measure(config, f_c, f_g);
          cpu += s.cpu_ms;
          gpu += s.gpu_ms;
          delta += s.delta_ms;
        }
        ds.samples.push_back(ProfileSample::record(config, f_c, f_g, cpu / n, gpu / n, delta / n));
      }
    }
  } catch (const Error& e) {
    ds.complete = false;
    ds.failure = e.what();
  }
  attach_features(ds);
  return ds;
}

void attach_features(ProfileDataset& dataset) {
  dataset.feature_names.clear();
  for (auto type : kAllLayerTypes) {
    const auto configs = dataset.configs(type);
    if (configs.empty()) continue;
    layerfit::FeatureSelection selection;
    try {
      selection = layerfit::select_features(dataset.samples, type);
    } catch (const FitError&) {
      // Too few configs (or flat latency) to rank: keep the extractor order.
      selection = layerfit::default_selection(type);
    }
    dataset.feature_names[type] = selection.names;
    for (auto& s : dataset.samples) {
      if (s.layer_config.layer_type != type) continue;
      s.features = selection.apply(layerfit::featureize(s.layer_config));
    }
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  std::filesystem::path p = csv_path;
  p.replace_extension(".meta.json");
  return p;
}

std::string dataset_csv(const ProfileDataset& dataset) {
  std::string out = csv::join(header_columns());
  for (const auto& s : dataset.samples) {
    std::vector<std::string> row = {std::string(to_string(s.layer_config.layer_type)),
                                    s.layer_config.canonical_json(),
                                    io::format_double(s.f_c.ghz()),
                                    io::format_double(s.f_g.ghz()),
                                    std::to_string(s.layer_config.context()),
                                    io::format_double(s.cpu_ms),
                                    io::format_double(s.gpu_ms),
                                    io::format_double(s.delta_ms),
                                    io::format_double(s.total_ms)};
    for (std::size_t i = 0; i < kWorkloadFeatureCount; ++i) {
      row.push_back(s.features ? io::format_double(s.features->values[i]) : std::string());
    }
    out += csv::join(row);
  }
  return out;
}

std::string dataset_metadata_json(const ProfileDataset& dataset) {
  json names = json::object();
  for (const auto& [type, n] : dataset.feature_names) names[std::string(to_string(type))] = n;
  json j{{"schema", kDatasetSchema},
         {"device_id", dataset.device_id},
         {"created_at", dataset.created_at},
         {"complete", dataset.complete},
         {"failure", dataset.failure},
         {"sample_count", dataset.samples.size()},
         {"units", {{"frequency", "GHz"}, {"duration", "ms"}}},
         {"grid", detail::to_json(dataset.grid)},
         {"plan", plan_to_json(dataset.plan)},
         {"feature_names", names}};
  return j.dump(2) + "\n";
}

void save_dataset(const ProfileDataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, dataset_csv(dataset));
  io::write_file_atomic(sidecar_path(path), dataset_metadata_json(dataset));
}

ProfileDataset parse_dataset(std::string_view csv_text, std::string_view metadata_json) {
  const json meta = detail::parse_json(metadata_json);
  ProfileDataset ds{.device_id = {},
                    .grid = FrequencyGrid({Frequency(1.0)}, {Frequency(1.0)}),
                    .plan = {},
                    .created_at = {},
                    .complete = true,
                    .failure = {},
                    .samples = {},
                    .feature_names = {}};
  std::size_t expected_count = 0;
  try {
    const auto schema = detail::require(meta, "schema").get<std::string>();
    if (schema != kDatasetSchema) {
      throw ValidationError("dataset schema mismatch: expected " + std::string(kDatasetSchema) +
                            ", got " + schema);
    }
    ds.device_id = detail::require(meta, "device_id").get<std::string>();
    ds.created_at = detail::require(meta, "created_at").get<std::string>();
    ds.complete = detail::require(meta, "complete").get<bool>();
    ds.failure = meta.value("failure", std::string());
    ds.grid = detail::grid_from_json(detail::require(meta, "grid"));
    ds.plan = plan_from_json(detail::require(meta, "plan"));
    expected_count = detail::require(meta, "sample_count").get<std::size_t>();
    for (const auto& [name, list] : detail::require(meta, "feature_names").items()) {
      ds.feature_names[parse_layer_type(name)] = list.get<std::vector<std::string>>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed dataset metadata: ") + e.what());
  }

  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw ParseError("dataset CSV is empty", 0);
  if (rows.front().fields != header_columns()) {
    throw ParseError("dataset CSV header does not match schema", 0);
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != kColumnCount) {
      throw ParseError("row " + std::to_string(r) + ": expected " +
                           std::to_string(kColumnCount) + " fields, got " +
                           std::to_string(row.fields.size()),
                       row.byte_offset);
    }
    const auto& f = row.fields;
    ProfileSample s;
    try {
      s.layer_config = parse_layer_config(f[1]);
    } catch (const ParseError& e) {
      throw ParseError("row " + std::to_string(r) + ": bad config_json", row.byte_offset);
    }
    if (to_string(s.layer_config.layer_type) != f[0]) {
      throw ValidationError("sample " + std::to_string(r - 1) +
                            ": layer_type column disagrees with config_json");
    }
    s.f_c = Frequency(csv::to_double(f[2], row, "f_c_ghz"));
    s.f_g = Frequency(csv::to_double(f[3], row, "f_g_ghz"));
    if (csv::to_int(f[4], row, "context") != s.layer_config.context()) {
      throw ValidationError("sample " + std::to_string(r - 1) +
                            ": context column disagrees with config_json");
    }
    s.cpu_ms = csv::to_double(f[5], row, "cpu_ms");
    s.gpu_ms = csv::to_double(f[6], row, "gpu_ms");
    s.delta_ms = csv::to_double(f[7], row, "delta_ms");
    s.total_ms = csv::to_double(f[8], row, "total_ms");
    const bool has_features = !f[kFixedColumns].empty();
    if (has_features) {
      WorkloadFeatures wf;
      for (std::size_t i = 0; i < kWorkloadFeatureCount; ++i) {
        wf.values[i] = csv::to_double(f[kFixedColumns + i], row, "feature_" + std::to_string(i));
      }
      if (auto it = ds.feature_names.find(s.layer_config.layer_type);
          it != ds.feature_names.end()) {
        wf.names = it->second;
      }
      s.features = std::move(wf);
    }
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.size() != expected_count) {
    throw ParseError("dataset has " + std::to_string(ds.samples.size()) +
                         " samples, metadata declares " + std::to_string(expected_count) +
                         " (truncated file?)",
                     csv_text.size());
  }
  validate_dataset(ds);
  return ds;
}

ProfileDataset load_dataset(const std::filesystem::path& path) {
  const std::string csv_text = io::read_text_file(path);
  const std::string meta = io::read_text_file(sidecar_path(path));
  return parse_dataset(csv_text, meta);
}

}  // namespace flame::profiler
