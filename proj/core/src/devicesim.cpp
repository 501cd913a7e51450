#include "flame/devicesim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "flame/error.hpp"
#include "flame/io.hpp"
#include "flame/workload.hpp"
#include "hashing.hpp"
#include "json_convert.hpp"

namespace flame::devicesim {

using detail::json;

namespace {

constexpr std::string_view kDeviceSchema = "flame.device/1";

double lerp(double lo, double hi, double u) { return lo + (hi - lo) * u; }

struct TypeLaw {
  double theta_c;
  double theta_g;
};

// Scale of k_c and k_g per million MACs, before the per-seed draw.
TypeLaw base_law(LayerType type) {
  switch (type) {
    case LayerType::kConvolution: return {0.040, 0.0032};
    case LayerType::kLinear: return {0.050, 0.0036};
    case LayerType::kTransformer: return {0.045, 0.0030};
  }
  return {0.04, 0.003};
}

// Reflects x into [0, 1] as a triangle wave, so a uniform x stays uniform.
double triangle(double x) {
  double m = x - 2.0 * std::floor(x / 2.0);
  return 1.0 - std::abs(m - 1.0);
}

Frequency pick_breakpoint(const FrequencyGrid& grid, double position) {
  const auto& levels = grid.cpu_levels();
  const std::size_t n = levels.size();
  if (n == 1) return levels.front();
  if (n == 2) return Frequency(0.5 * (levels[0].ghz() + levels[1].ghz()));
  const double last = static_cast<double>(n - 1);
  double idx = std::round(lerp(0.2 * last, 0.8 * last, position));
  idx = std::clamp(idx, 1.0, last - 1.0);
  return levels[static_cast<std::size_t>(idx)];
}

double draw_jitter(double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return 1.0;
  std::lognormal_distribution<double> dist(0.0, sigma);
  return dist(rng);
}

void check_on_grid(const DeviceConfig& device, Frequency f_c, Frequency f_g) {
  if (!device.grid.cpu_index(f_c)) {
    throw ValidationError("CPU frequency " + io::format_double(f_c.ghz()) +
                          " GHz is not on the device grid");
  }
  if (!device.grid.gpu_index(f_g)) {
    throw ValidationError("GPU frequency " + io::format_double(f_g.ghz()) +
                          " GHz is not on the device grid");
  }
}

}  // namespace

void PowerModel::validate() const {
  if (!(p_static_w > 0.0)) throw ValidationError("p_static must be positive");
  if (!(a_c >= 0.0) || !(a_g >= 0.0)) {
    throw ValidationError("power coefficients must be non-negative");
  }
}

double power_watts(const PowerModel& power, double f_c_ghz, double f_g_ghz) {
  return power.p_static_w + power.a_c * f_c_ghz * f_c_ghz * f_c_ghz +
         power.a_g * f_g_ghz * f_g_ghz * f_g_ghz;
}

double measure_power(const PowerModel& power, Frequency f_c, Frequency f_g) {
  return power_watts(power, f_c.ghz(), f_g.ghz());
}

std::map<LayerType, LawExponents> default_law_exponents() {
  return {{LayerType::kConvolution, {0.35, 0.95}},
          {LayerType::kLinear, {0.30, 0.90}},
          {LayerType::kTransformer, {0.40, 0.97}}};
}

void DeviceConfig::validate() const {
  power.validate();
  if (!(jitter_sigma >= 0.0) || !std::isfinite(jitter_sigma)) {
    throw ValidationError("jitter_sigma must be >= 0");
  }
  for (const auto& [type, e] : feature_law_exponents) {
    if (!(e.cpu > 0.0) || !(e.gpu > 0.0)) {
      throw ValidationError("feature law exponents must be positive (" +
                            std::string(to_string(type)) + ")");
    }
  }
}

LawExponents DeviceConfig::exponents(LayerType type) const {
  auto it = feature_law_exponents.find(type);
  if (it != feature_law_exponents.end()) return it->second;
  return default_law_exponents().at(type);
}

DeviceConfig make_device(std::uint64_t seed, const DeviceOptions& options) {
  const std::uint64_t h = hashing::mix(seed ^ 0xD1CE5EEDULL);
  PowerModel power;
  power.p_static_w = lerp(4.0, 6.0, hashing::unit(h, 1));
  power.a_c = lerp(0.25, 0.55, hashing::unit(h, 2));
  power.a_g = lerp(4.0, 8.0, hashing::unit(h, 3));
  DeviceConfig device{
      .device_id = "sim-" + std::to_string(seed),
      .grid = FrequencyGrid::uniform(options.cpu_min_ghz, options.cpu_max_ghz,
                                     options.cpu_levels, options.gpu_min_ghz,
                                     options.gpu_max_ghz, options.gpu_levels),
      .power = power,
      .jitter_sigma = options.jitter_sigma,
      .coefficient_seed = seed,
      .feature_law_exponents = default_law_exponents(),
  };
  device.validate();
  return device;
}

std::string device_to_json(const DeviceConfig& device) {
  json exps = json::object();
  for (const auto& [type, e] : device.feature_law_exponents) {
    exps[std::string(to_string(type))] = json{{"cpu", e.cpu}, {"gpu", e.gpu}};
  }
  json j{{"schema", kDeviceSchema},
         {"device_id", device.device_id},
         {"grid", detail::to_json(device.grid)},
         {"power",
          {{"p_static_w", device.power.p_static_w},
           {"a_c_w_per_ghz3", device.power.a_c},
           {"a_g_w_per_ghz3", device.power.a_g}}},
         {"jitter_sigma", device.jitter_sigma},
         {"coefficient_seed", device.coefficient_seed},
         {"feature_law_exponents", exps}};
  return j.dump(2) + "\n";
}

DeviceConfig parse_device(std::string_view json_text) {
  json j = detail::parse_json(json_text);
  try {
    auto schema = detail::require(j, "schema").get<std::string>();
    if (schema != kDeviceSchema) {
      throw ValidationError("device schema mismatch: expected " + std::string(kDeviceSchema) +
                            ", got " + schema);
    }
    const json& p = detail::require(j, "power");
    DeviceConfig device{
        .device_id = detail::require(j, "device_id").get<std::string>(),
        .grid = detail::grid_from_json(detail::require(j, "grid")),
        .power = {detail::require(p, "p_static_w").get<double>(),
                  detail::require(p, "a_c_w_per_ghz3").get<double>(),
                  detail::require(p, "a_g_w_per_ghz3").get<double>()},
        .jitter_sigma = detail::require(j, "jitter_sigma").get<double>(),
        .coefficient_seed = detail::require(j, "coefficient_seed").get<std::uint64_t>(),
        .feature_law_exponents = {},
    };
    if (auto it = j.find("feature_law_exponents"); it != j.end()) {
      for (const auto& [name, e] : it->items()) {
        device.feature_law_exponents[parse_layer_type(name)] =
            LawExponents{detail::require(e, "cpu").get<double>(),
                         detail::require(e, "gpu").get<double>()};
      }
    }
    device.validate();
    return device;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed device config: ") + e.what());
  }
}

DeviceConfig load_device(const std::filesystem::path& path) {
  return parse_device(io::read_text_file(path));
}

GroundTruthLayerModel generate_ground_truth(const LayerConfig& config,
                                            const DeviceConfig& device) {
  validate_layer_config(config);
  const auto type_index = static_cast<std::uint64_t>(config.layer_type);
  const std::uint64_t type_seed =
      hashing::mix(device.coefficient_seed * 0x9E3779B97F4A7C15ULL + type_index + 1);
  const std::uint64_t config_seed =
      hashing::mix(type_seed ^ hashing::fnv1a(config.canonical_json()));
  auto type_u = [&](std::uint64_t salt) { return hashing::unit(type_seed, salt); };
  auto config_u = [&](std::uint64_t salt) { return hashing::unit(config_seed, salt); };

  const double macs_m = std::max(workload_shape(config).macs / 1e6, 1e-3);
  const LawExponents exps = device.exponents(config.layer_type);
  const TypeLaw base = base_law(config.layer_type);

  GroundTruthLayerModel law;
  law.k_c = base.theta_c * lerp(0.8, 1.25, type_u(1)) * std::pow(macs_m, exps.cpu);
  law.k_g = base.theta_g * lerp(0.8, 1.25, type_u(2)) * std::pow(macs_m, exps.gpu);
  law.b_c = lerp(0.01, 0.03, type_u(3)) * std::pow(macs_m, 0.1) *
            (1.0 + 0.05 * (2.0 * config_u(1) - 1.0));
  law.b_g = lerp(0.02, 0.05, type_u(4)) * std::pow(macs_m, 0.1) *
            (1.0 + 0.05 * (2.0 * config_u(2) - 1.0));

  // Saturated: the GPU starts before the CPU finishes, overlapping a fixed
  // fraction of the CPU time.
  const double overlap = lerp(0.3, 0.6, type_u(7));
  law.saturated = DeltaBranch{-overlap * law.k_c, lerp(0.01, 0.03, type_u(8)) * law.k_g,
                              -overlap * law.b_c};

  const double position =
      triangle(2.0 * type_u(9) + lerp(0.1, 0.25, type_u(10)) * std::log(macs_m));
  law.breakpoint = pick_breakpoint(device.grid, position);

  // Unsaturated: dispatch-bound, the gap shrinks as the CPU speeds up. The
  // offset places it within 5% of the saturated branch at the breakpoint for a
  // mid-grid GPU level.
  const auto& gpu = device.grid.gpu_levels();
  const Frequency f_g_mid = gpu[gpu.size() / 2];
  law.unsaturated.k_c = lerp(0.3, 0.7, type_u(5)) * law.k_c;
  law.unsaturated.k_g = lerp(0.01, 0.05, type_u(6)) * law.k_g;
  const double joint = law.saturated.eval(law.breakpoint, f_g_mid) *
                       (1.0 + 0.05 * (2.0 * config_u(3) - 1.0));
  law.unsaturated.b = joint - law.unsaturated.k_c * law.breakpoint.inverse() -
                      law.unsaturated.k_g * f_g_mid.inverse();
  return law;
}

ProfileSample simulate_layer(const GroundTruthLayerModel& model, const LayerConfig& config,
                             const DeviceConfig& device, Frequency f_c, Frequency f_g,
                             std::mt19937_64& rng) {
  check_on_grid(device, f_c, f_g);
  const double j_cpu = draw_jitter(device.jitter_sigma, rng);
  const double j_gpu = draw_jitter(device.jitter_sigma, rng);
  const double j_delta = draw_jitter(device.jitter_sigma, rng);
  return ProfileSample::record(config, f_c, f_g, model.cpu_ms(f_c) * j_cpu,
                               model.gpu_ms(f_g) * j_gpu, model.delta_ms(f_c, f_g) * j_delta);
}

namespace {

SimTrace run_model(const ModelSpec& spec, Frequency f_c, Frequency f_g,
                   const DeviceConfig& device, std::optional<double> load_factor,
                   std::mt19937_64& rng,
                   const std::function<const GroundTruthLayerModel&(const LayerConfig&)>& law_of) {
  validate_model_spec(spec);
  check_on_grid(device, f_c, f_g);
  const double stretch = 1.0 + load_factor.value_or(0.0);
  if (!(stretch > 0.0)) throw ValidationError("load factor must be > -1");

  SimTrace trace;
  trace.layers.reserve(spec.layers.size());
  double cpu_clock = 0.0;
  double gpu_free = 0.0;
  for (const auto& layer : spec.layers) {
    ProfileSample s = simulate_layer(law_of(layer), layer, device, f_c, f_g, rng);
    LayerSpan span;
    span.cpu_start_ms = cpu_clock;
    span.cpu_end_ms = cpu_clock + s.cpu_ms * stretch;
    const double ready = span.cpu_end_ms + s.delta_ms;
    span.gpu_start_ms = std::max(ready, gpu_free);
    span.gpu_end_ms = span.gpu_start_ms + s.gpu_ms * stretch;
    cpu_clock = span.cpu_end_ms;
    gpu_free = span.gpu_end_ms;
    trace.layers.push_back(span);
  }
  trace.total_latency_ms = trace.layers.back().gpu_end_ms - trace.layers.front().cpu_start_ms;
  trace.avg_power_w = measure_power(device.power, f_c, f_g);
  return trace;
}

}  // namespace

SimTrace simulate_model(const ModelSpec& spec, Frequency f_c, Frequency f_g,
                        const DeviceConfig& device, std::optional<double> load_factor,
                        std::mt19937_64& rng) {
  GroundTruthLayerModel scratch;
  return run_model(spec, f_c, f_g, device, load_factor, rng,
                   [&](const LayerConfig& l) -> const GroundTruthLayerModel& {
                     scratch = generate_ground_truth(l, device);
                     return scratch;
                   });
}

std::string spans_to_csv(const std::vector<LayerSpan>& spans) {
  std::string out = "layer,cpu_start_ms,cpu_end_ms,gpu_start_ms,gpu_end_ms\n";
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& s = spans[i];
    out += std::to_string(i) + ',' + io::format_double(s.cpu_start_ms) + ',' +
           io::format_double(s.cpu_end_ms) + ',' + io::format_double(s.gpu_start_ms) + ',' +
           io::format_double(s.gpu_end_ms) + '\n';
  }
  return out;
}

DeviceSimulator::DeviceSimulator(DeviceConfig config, std::uint64_t rng_seed)
    : config_(std::move(config)), noiseless_(config_), rng_(rng_seed) {
  config_.validate();
  noiseless_.jitter_sigma = 0.0;
}

const GroundTruthLayerModel& DeviceSimulator::ground_truth(const LayerConfig& layer) {
  auto it = laws_.find(layer);
  if (it == laws_.end()) {
    it = laws_.emplace(layer, generate_ground_truth(layer, config_)).first;
  }
  return it->second;
}

ProfileSample DeviceSimulator::simulate_layer(const LayerConfig& layer, Frequency f_c,
                                              Frequency f_g) {
  return devicesim::simulate_layer(ground_truth(layer), layer, config_, f_c, f_g, rng_);
}

SimTrace DeviceSimulator::simulate_model(const ModelSpec& spec, Frequency f_c, Frequency f_g,
                                         std::optional<double> load_factor) {
  return run_model(spec, f_c, f_g, config_, load_factor, rng_,
                   [this](const LayerConfig& l) -> const GroundTruthLayerModel& {
                     return ground_truth(l);
                   });
}

double DeviceSimulator::noiseless_total_ms(const ModelSpec& spec, Frequency f_c,
                                           Frequency f_g) {
  std::mt19937_64 unused(0);
  return run_model(spec, f_c, f_g, noiseless_, std::nullopt, unused,
                   [this](const LayerConfig& l) -> const GroundTruthLayerModel& {
                     return ground_truth(l);
                   })
      .total_latency_ms;
}

}  // namespace flame::devicesim
