#include "flame/layerfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "flame/error.hpp"

namespace flame::layerfit {

namespace {

struct BranchResult {
  DeltaBranch branch;
  double sse = 0.0;
};

std::size_t distinct_cpu(std::span<const DeltaPoint> pts) {
  std::set<double> s;
  for (const auto& p : pts) s.insert(p.f_c.ghz());
  return s.size();
}

std::size_t distinct_gpu(std::span<const DeltaPoint> pts) {
  std::set<double> s;
  for (const auto& p : pts) s.insert(p.f_g.ghz());
  return s.size();
}

double branch_sse(const DeltaBranch& b, std::span<const DeltaPoint> pts) {
  double sse = 0.0;
  for (const auto& p : pts) {
    const double r = p.delta_ms - b.eval(p.f_c, p.f_g);
    sse += r * r;
  }
  return sse;
}

// Least squares on the chosen subset of (1/f_c, 1/f_g, 1).
DeltaBranch solve_branch(std::span<const DeltaPoint> pts, bool use_c, bool use_g) {
  const std::size_t cols = 1 + (use_c ? 1 : 0) + (use_g ? 1 : 0);
  std::vector<double> design;
  std::vector<double> y;
  design.reserve(pts.size() * cols);
  for (const auto& p : pts) {
    if (use_c) design.push_back(p.f_c.inverse());
    if (use_g) design.push_back(p.f_g.inverse());
    design.push_back(1.0);
    y.push_back(p.delta_ms);
  }
  const auto beta = least_squares(design, cols, y);
  DeltaBranch b;
  std::size_t i = 0;
  if (use_c) b.k_c = beta[i++];
  if (use_g) b.k_g = beta[i++];
  b.b = beta[i];
  return b;
}

std::optional<BranchResult> fit_branch(std::span<const DeltaPoint> pts, BranchFitMode mode,
                                       std::string_view name) {
  const std::size_t nc = distinct_cpu(pts);
  const std::size_t ng = distinct_gpu(pts);
  if (mode == BranchFitMode::kStrict) {
    if (pts.size() < 3 || nc < 2 || ng < 2) {
      throw FitError(std::string(name) + " branch is underdetermined: " +
                     std::to_string(pts.size()) + " samples over " + std::to_string(nc) +
                     " CPU and " + std::to_string(ng) + " GPU levels");
    }
    try {
      const DeltaBranch b = solve_branch(pts, true, true);
      return BranchResult{b, branch_sse(b, pts)};
    } catch (const FitError&) {
      throw FitError(std::string(name) + " branch is rank deficient");
    }
  }
  if (pts.empty()) return std::nullopt;
  const bool use_c = nc >= 2;
  const bool use_g = ng >= 2;
  for (auto [c, g] : {std::pair{use_c, use_g}, std::pair{use_c, false}, std::pair{false, use_g},
                      std::pair{false, false}}) {
    try {
      const DeltaBranch b = solve_branch(pts, c, g);
      return BranchResult{b, branch_sse(b, pts)};
    } catch (const FitError&) {
    }
  }
  throw FitError(std::string(name) + " branch could not be fitted");
}

void split(std::span<const DeltaPoint> pts, Frequency breakpoint, std::vector<DeltaPoint>& uns,
           std::vector<DeltaPoint>& sat) {
  for (const auto& p : pts) (p.f_c > breakpoint ? sat : uns).push_back(p);
}

std::vector<Frequency> sampled_cpu_levels(std::span<const DeltaPoint> pts) {
  std::set<Frequency> s;
  for (const auto& p : pts) s.insert(p.f_c);
  return {s.begin(), s.end()};
}

Frequency snap(std::span<const Frequency> levels, double ghz) {
  Frequency best = levels.front();
  double best_d = std::abs(best.ghz() - ghz);
  for (const auto& f : levels) {
    const double d = std::abs(f.ghz() - ghz);
    if (d < best_d) {
      best = f;
      best_d = d;
    }
  }
  return best;
}

std::string config_label(const LayerConfig& config) { return config.canonical_json(); }

}  // namespace

ProcessorFit fit_processor_model(std::span<const TimedPoint> points) {
  std::set<double> distinct;
  for (const auto& p : points) distinct.insert(p.f.ghz());
  if (distinct.size() < 2) {
    throw FitError("processor model needs >= 2 distinct frequencies, have " +
                   std::to_string(distinct.size()));
  }
  std::vector<double> design;
  std::vector<double> y;
  for (const auto& p : points) {
    design.push_back(p.f.inverse());
    design.push_back(1.0);
    y.push_back(p.t_ms);
  }
  const auto beta = least_squares(design, 2, y);
  ProcessorFit fit{beta[0], beta[1]};
  if (fit.k < 0.0) {
    fit.k = 0.0;
    double sum = 0.0;
    for (double t : y) sum += t;
    fit.b = sum / static_cast<double>(y.size());
  }
  return fit;
}

BreakpointResult detect_breakpoint(std::span<const DeltaPoint> points,
                                   std::span<const Frequency> grid_cpu_levels) {
  const auto levels = sampled_cpu_levels(points);
  if (levels.size() < 3) {
    throw FitError("breakpoint detection needs >= 3 sampled CPU levels, have " +
                   std::to_string(levels.size()));
  }
  BreakpointResult out;
  out.sse_single_branch = fit_branch(points, BranchFitMode::kReduce, "single")->sse;

  std::size_t best_j = 0;
  double best_sse = std::numeric_limits<double>::infinity();
  std::vector<BranchResult> best_branches;
  for (std::size_t j = 1; j + 1 < levels.size(); ++j) {
    std::vector<DeltaPoint> uns, sat;
    split(points, levels[j], uns, sat);
    const auto u = fit_branch(uns, BranchFitMode::kReduce, "unsaturated");
    const auto s = fit_branch(sat, BranchFitMode::kReduce, "saturated");
    const double sse = u->sse + s->sse;
    if (sse < best_sse * (1.0 - 1e-9)) {
      best_sse = sse;
      best_j = j;
      best_branches = {*u, *s};
    }
  }

  const double single = out.sse_single_branch;
  double total_sq = 0.0;
  for (const auto& p : points) total_sq += p.delta_ms * p.delta_ms;
  out.low_confidence = single <= 1e-20 * std::max(total_sq, 1e-300) ||
                       (single - best_sse) < 0.05 * single;
  if (out.low_confidence && best_j != 1) {
    std::vector<DeltaPoint> uns, sat;
    split(points, levels[1], uns, sat);
    best_j = 1;
    best_branches = {*fit_branch(uns, BranchFitMode::kReduce, "unsaturated"),
                     *fit_branch(sat, BranchFitMode::kReduce, "saturated")};
    best_sse = best_branches[0].sse + best_branches[1].sse;
  }
  out.sse_two_branch = best_sse;
  out.lower = levels[best_j];
  out.upper = levels[best_j + 1];
  out.breakpoint = out.lower;

  if (out.low_confidence || grid_cpu_levels.empty()) return out;

  // Between the bracketing samples, place the switch where the branches meet.
  std::set<Frequency> gpu_set;
  for (const auto& p : points) gpu_set.insert(p.f_g);
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& g : grid_cpu_levels) {
    if (g < out.lower || !(g < out.upper)) continue;
    double gap = 0.0;
    for (const auto& fg : gpu_set) {
      gap += std::abs(best_branches[0].branch.eval(g, fg) - best_branches[1].branch.eval(g, fg));
    }
    if (gap < best_gap * (1.0 - 1e-12)) {
      best_gap = gap;
      out.breakpoint = g;
    }
  }
  return out;
}

DeltaFit fit_delta(std::span<const DeltaPoint> points, Frequency breakpoint, BranchFitMode mode) {
  std::vector<DeltaPoint> uns, sat;
  split(points, breakpoint, uns, sat);
  const auto u = fit_branch(uns, mode, "unsaturated");
  const auto s = fit_branch(sat, mode, "saturated");
  if (!u && !s) throw FitError("no interaction samples to fit");
  DeltaFit out;
  out.unsaturated = u ? u->branch : s->branch;
  out.saturated = s ? s->branch : u->branch;
  return out;
}

std::array<double, kCoefficientCount> flatten(const LatencyLaw& law) {
  return {law.k_c,
          law.b_c,
          law.k_g,
          law.b_g,
          law.unsaturated.k_c,
          law.unsaturated.k_g,
          law.unsaturated.b,
          law.saturated.k_c,
          law.saturated.k_g,
          law.saturated.b,
          law.breakpoint.ghz()};
}

CoefficientSet fit_layer_coefficients(std::span<const ProfileSample> samples,
                                      std::span<const Frequency> cpu_levels) {
  if (samples.empty()) throw FitError("no samples to fit");
  const LayerConfig& config = samples.front().layer_config;
  std::vector<TimedPoint> cpu, gpu;
  std::vector<DeltaPoint> delta;
  for (const auto& s : samples) {
    if (s.layer_config != config) throw FitError("samples mix several configs");
    cpu.push_back({s.f_c, s.cpu_ms});
    gpu.push_back({s.f_g, s.gpu_ms});
    delta.push_back({s.f_c, s.f_g, s.delta_ms});
  }
  try {
    CoefficientSet out;
    const ProcessorFit c = fit_processor_model(cpu);
    const ProcessorFit g = fit_processor_model(gpu);
    out.law.k_c = c.k;
    out.law.b_c = c.b;
    out.law.k_g = g.k;
    out.law.b_g = g.b;
    if (sampled_cpu_levels(delta).size() >= 3) {
      const BreakpointResult bp = detect_breakpoint(delta, cpu_levels);
      const DeltaFit d = fit_delta(delta, bp.breakpoint, BranchFitMode::kReduce);
      out.law.breakpoint = bp.breakpoint;
      out.law.unsaturated = d.unsaturated;
      out.law.saturated = d.saturated;
    } else {
      const auto one = fit_branch(delta, BranchFitMode::kReduce, "single");
      out.law.breakpoint = cpu_levels.empty() ? sampled_cpu_levels(delta).back() : cpu_levels.back();
      out.law.unsaturated = one->branch;
      out.law.saturated = one->branch;
    }
    double sq = 0.0;
    for (const auto& s : samples) {
      const double r = s.total_ms - out.law.total_ms(s.f_c, s.f_g);
      sq += r * r;
    }
    out.fit_residual_ms = std::sqrt(sq / static_cast<double>(samples.size()));
    return out;
  } catch (const FitError& e) {
    throw FitError("config " + config_label(config) + ": " + e.what());
  }
}

const TrainingEntry* LayerTypeEstimator::find_training(const LayerConfig& config) const {
  auto it = std::lower_bound(training.begin(), training.end(), config,
                             [](const TrainingEntry& e, const LayerConfig& c) { return e.config < c; });
  if (it == training.end() || it->config != config) return nullptr;
  return &*it;
}

WorkloadFeatures LayerTypeEstimator::parse_features(const LayerConfig& config) const {
  const RawFeatures raw = featureize(config);
  if (parser.empty()) return selector.apply(raw);
  WorkloadFeatures out;
  out.names = selector.names;
  for (std::size_t m = 0; m < parser.size() && m < kWorkloadFeatureCount; ++m) {
    out.values[m] = std::max(0.0, parser[m].predict(raw.values));
  }
  return out;
}

LatencyLaw LayerTypeEstimator::predict_coefficients(const LayerConfig& config) const {
  if (lookup_only()) {
    throw FitError(std::string(to_string(layer_type)) + " estimator has only " +
                   std::to_string(training.size()) +
                   " training configs and cannot generalize to " + config_label(config));
  }
  const WorkloadFeatures h = parse_features(config);
  std::array<double, kCoefficientCount> c{};
  for (std::size_t i = 0; i < kCoefficientCount; ++i) {
    c[i] = coefficient_regressors[i].predict(h.values);
  }
  LatencyLaw law;
  law.k_c = std::max(0.0, c[0]);
  law.b_c = c[1];
  law.k_g = std::max(0.0, c[2]);
  law.b_g = c[3];
  law.unsaturated = {c[4], c[5], c[6]};
  law.saturated = {c[7], c[8], c[9]};
  law.breakpoint = snap(cpu_levels, c[10]);
  return law;
}

LatencyLaw LayerTypeEstimator::coefficients_for(const LayerConfig& config) const {
  if (const TrainingEntry* e = find_training(config)) return e->coefficients.law;
  return predict_coefficients(config);
}

FeatureSelection select_features(const profiler::ProfileDataset& dataset, LayerType type) {
  return select_features(std::span<const ProfileSample>(dataset.samples), type);
}

LayerTypeEstimator build_layer_estimator(const profiler::ProfileDataset& dataset,
                                         LayerType type, const EstimatorOptions& options) {
  std::map<LayerConfig, std::vector<ProfileSample>> by_config;
  for (const auto& s : dataset.samples) {
    if (s.layer_config.layer_type == type) by_config[s.layer_config].push_back(s);
  }
  if (by_config.empty()) {
    throw FitError("no samples for layer type " + std::string(to_string(type)));
  }

  LayerTypeEstimator est;
  est.layer_type = type;
  est.cpu_levels = dataset.grid.cpu_levels();
  for (const auto& [config, samples] : by_config) {
    est.training.push_back({config, fit_layer_coefficients(samples, est.cpu_levels)});
  }

  if (by_config.size() < 3) {
    est.selector = default_selection(type);
    return est;
  }
  try {
    est.selector = select_features(dataset, type);
  } catch (const FitError&) {
    est.selector = default_selection(type);
  }

  std::vector<std::vector<double>> raw_rows;
  for (const auto& e : est.training) raw_rows.push_back(featureize(e.config).values);

  RegressorOptions parser_options;
  parser_options.transform = TargetTransform::kLog1p;
  for (std::size_t m = 0; m < est.selector.indices.size(); ++m) {
    std::vector<double> target;
    for (const auto& row : raw_rows) target.push_back(row[est.selector.indices[m]]);
    est.parser.push_back(fit_regressor(raw_rows, target, parser_options));
  }

  std::vector<std::vector<double>> h_rows;
  for (const auto& e : est.training) {
    const auto h = est.parse_features(e.config);
    h_rows.emplace_back(h.values.begin(), h.values.end());
  }
  RegressorOptions coeff_options;
  coeff_options.kind = options.kind;
  for (std::size_t i = 0; i < kCoefficientCount; ++i) {
    std::vector<double> target;
    for (const auto& e : est.training) target.push_back(flatten(e.coefficients.law)[i]);
    est.coefficient_regressors.push_back(fit_regressor(h_rows, target, coeff_options));
  }
  return est;
}

LayerEstimate evaluate_law(const LatencyLaw& law, Frequency f_c, Frequency f_g) {
  LayerEstimate e;
  e.cpu_ms = std::max(0.0, law.cpu_ms(f_c));
  e.gpu_ms = std::max(0.0, law.gpu_ms(f_g));
  e.delta_ms = law.delta_ms(f_c, f_g);
  e.total_ms = e.cpu_ms + e.gpu_ms + e.delta_ms;
  return e;
}

LayerEstimate estimate_layer(const LayerTypeEstimator& estimator, const LayerConfig& config,
                             Frequency f_c, Frequency f_g) {
  if (config.layer_type != estimator.layer_type) {
    throw FitError("estimator for " + std::string(to_string(estimator.layer_type)) +
                   " cannot estimate a " + std::string(to_string(config.layer_type)) + " layer");
  }
  return evaluate_law(estimator.coefficients_for(config), f_c, f_g);
}

}  // namespace flame::layerfit
