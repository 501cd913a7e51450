#include "flame/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "flame/error.hpp"

namespace flame::layerfit {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double inf() { return std::numeric_limits<double>::infinity(); }

TargetTransform choose_transform(std::span<const double> y) {
  const bool all_pos = std::all_of(y.begin(), y.end(), [](double v) { return v > 0.0; });
  if (all_pos) return TargetTransform::kLogPositive;
  const bool all_neg = std::all_of(y.begin(), y.end(), [](double v) { return v < 0.0; });
  if (all_neg) return TargetTransform::kLogNegative;
  return TargetTransform::kIdentity;
}

double forward(TargetTransform t, double v) {
  switch (t) {
    case TargetTransform::kLogPositive: return std::log(v);
    case TargetTransform::kLogNegative: return std::log(-v);
    case TargetTransform::kLog1p: return std::log1p(v);
    case TargetTransform::kIdentity: return v;
  }
  return v;
}

double inverse(TargetTransform t, double v) {
  switch (t) {
    case TargetTransform::kLogPositive: return std::exp(v);
    case TargetTransform::kLogNegative: return -std::exp(v);
    case TargetTransform::kLog1p: return std::expm1(v);
    case TargetTransform::kIdentity: return v;
  }
  return v;
}

struct SubsetFit {
  double score = inf();
  Eigen::VectorXd beta;
};

// Intercept plus the given log-feature columns, scored by generalized
// cross-validation n * SSE / (n - p)^2.
SubsetFit fit_subset(const Matrix& z, const Eigen::VectorXd& t,
                     const std::vector<std::size_t>& cols) {
  const Eigen::Index n = z.rows();
  const Eigen::Index p = static_cast<Eigen::Index>(cols.size()) + 1;
  SubsetFit out;
  if (n <= p) return out;
  Eigen::MatrixXd x(n, p);
  Eigen::VectorXd norm = Eigen::VectorXd::Ones(p);
  x.col(0).setOnes();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto k = static_cast<Eigen::Index>(j) + 1;
    x.col(k) = z.col(static_cast<Eigen::Index>(cols[j]));
    const double m = x.col(k).cwiseAbs().maxCoeff();
    if (m > 0.0) norm(k) = m;
  }
  const Eigen::MatrixXd xs = x * norm.cwiseInverse().asDiagonal();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) return out;
  out.beta = qr.solve(t).cwiseQuotient(norm);
  const double sse = (t - x * out.beta).squaredNorm();
  const double dof = static_cast<double>(n - p);
  out.score = static_cast<double>(n) * sse / (dof * dof);
  return out;
}

void fit_log_linear(TargetRegressor& reg, const Matrix& z, const Eigen::VectorXd& t,
                    const RegressorOptions& options) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  const std::size_t cap = n >= 3 ? std::min(options.max_terms, n - 2) : 0;

  std::vector<std::size_t> chosen;
  SubsetFit best = fit_subset(z, t, chosen);
  if (!std::isfinite(best.score)) {
    best.beta = Eigen::VectorXd::Constant(1, t.mean());
  }
  const double floor = 1e-24 * std::max(1.0, t.squaredNorm());
  while (chosen.size() < cap && best.score > floor) {
    SubsetFit round_best;
    std::size_t round_col = 0;
    for (std::size_t c = 0; c < static_cast<std::size_t>(z.cols()); ++c) {
      if (std::find(chosen.begin(), chosen.end(), c) != chosen.end()) continue;
      auto cols = chosen;
      cols.push_back(c);
      SubsetFit f = fit_subset(z, t, cols);
      if (f.score < round_best.score) {
        round_best = std::move(f);
        round_col = c;
      }
    }
    if (!(round_best.score < 0.99 * best.score)) break;
    chosen.push_back(round_col);
    best = std::move(round_best);
  }
  reg.terms = chosen;
  reg.intercept = best.beta(0);
  reg.weights.assign(best.beta.data() + 1, best.beta.data() + best.beta.size());
}

// Term j < p is log1p(x_j); term p + j is x_j itself.
double term_value(std::span<const double> z, std::size_t term) {
  return term < z.size() ? z[term] : std::expm1(z[term - z.size()]);
}

double trend(const TargetRegressor& reg, std::span<const double> z) {
  double v = reg.intercept;
  for (std::size_t i = 0; i < reg.terms.size(); ++i) {
    v += reg.weights[i] * term_value(z, reg.terms[i]);
  }
  return v;
}

void attach_residuals(TargetRegressor& reg, const Matrix& z, const Eigen::VectorXd& t,
                      std::size_t neighbors) {
  const auto n = z.rows();
  const auto p = z.cols();
  reg.neighbors = neighbors;
  reg.scale.assign(static_cast<std::size_t>(p), 0.0);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = z.col(j).mean();
    const double var = (z.col(j).array() - mean).square().sum() / static_cast<double>(n);
    reg.scale[static_cast<std::size_t>(j)] = var > 1e-18 ? std::sqrt(var) : 0.0;
  }
  reg.anchors.clear();
  reg.residuals.clear();
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> row(static_cast<std::size_t>(p));
    for (Eigen::Index j = 0; j < p; ++j) row[static_cast<std::size_t>(j)] = z(i, j);
    const double r = t(i) - trend(reg, row);
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] = reg.scale[j] > 0.0 ? row[j] / reg.scale[j] : 0.0;
    }
    reg.anchors.push_back(std::move(row));
    reg.residuals.push_back(r);
  }
}

double interpolate_residual(const TargetRegressor& reg, std::span<const double> z) {
  if (reg.anchors.empty()) return 0.0;
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(reg.anchors.size());
  for (std::size_t a = 0; a < reg.anchors.size(); ++a) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
      const double u = reg.scale[j] > 0.0 ? z[j] / reg.scale[j] : 0.0;
      d2 += (u - reg.anchors[a][j]) * (u - reg.anchors[a][j]);
    }
    dist.emplace_back(d2, a);
  }
  const std::size_t k = std::min<std::size_t>(std::max<std::size_t>(reg.neighbors, 1), dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  if (dist.front().first < 1e-20) return reg.residuals[dist.front().second];
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double w = 1.0 / dist[i].first;
    num += w * reg.residuals[dist[i].second];
    den += w;
  }
  return num / den;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double sse = inf();
};

int grow(RegressionTree& tree, const Matrix& z, const std::vector<double>& r,
         const std::vector<std::size_t>& idx, int depth, int max_depth) {
  double mean = 0.0;
  for (auto i : idx) mean += r[i];
  mean /= static_cast<double>(idx.size());
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});
  if (depth >= max_depth || idx.size() < 2) return node_id;

  double base_sse = 0.0;
  for (auto i : idx) base_sse += (r[i] - mean) * (r[i] - mean);

  SplitChoice best;
  for (Eigen::Index f = 0; f < z.cols(); ++f) {
    std::vector<std::size_t> order = idx;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return z(a, f) < z(b, f); });
    double left_sum = 0.0, left_sq = 0.0;
    double total_sum = 0.0, total_sq = 0.0;
    for (auto i : order) {
      total_sum += r[i];
      total_sq += r[i] * r[i];
    }
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      left_sum += r[order[k]];
      left_sq += r[order[k]] * r[order[k]];
      const double a = z(order[k], f);
      const double b = z(order[k + 1], f);
      if (!(b > a)) continue;
      const double nl = static_cast<double>(k + 1);
      const double nr = static_cast<double>(order.size() - k - 1);
      const double sse = (left_sq - left_sum * left_sum / nl) +
                         (total_sq - left_sq - (total_sum - left_sum) * (total_sum - left_sum) / nr);
      if (sse < best.sse - 1e-15) best = {static_cast<int>(f), 0.5 * (a + b), sse};
    }
  }
  if (best.feature < 0 || !(best.sse < base_sse - 1e-15)) return node_id;

  std::vector<std::size_t> left, right;
  for (auto i : idx) (z(i, best.feature) <= best.threshold ? left : right).push_back(i);
  const int l = grow(tree, z, r, left, depth + 1, max_depth);
  const int rr = grow(tree, z, r, right, depth + 1, max_depth);
  tree.nodes[node_id].feature = best.feature;
  tree.nodes[node_id].threshold = best.threshold;
  tree.nodes[node_id].left = l;
  tree.nodes[node_id].right = rr;
  return node_id;
}

void fit_boosted(TargetRegressor& reg, const Matrix& z, const Eigen::VectorXd& t,
                 const RegressorOptions& options) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  reg.shrinkage = options.shrinkage;
  reg.intercept = t.mean();
  std::vector<double> pred(n, reg.intercept);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t round = 0; round < options.rounds; ++round) {
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) resid[i] = t(static_cast<Eigen::Index>(i)) - pred[i];
    RegressionTree tree;
    grow(tree, z, resid, all, 0, options.max_depth);
    if (tree.nodes.size() == 1 && std::abs(tree.nodes[0].value) < 1e-15) break;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(z.row(static_cast<Eigen::Index>(i)).data(),
                              z.row(static_cast<Eigen::Index>(i)).data() + z.cols());
      pred[i] += reg.shrinkage * tree.predict(row);
    }
    reg.trees.push_back(std::move(tree));
  }
}

}  // namespace

std::string_view to_string(RegressorKind kind) {
  return kind == RegressorKind::kBoostedTrees ? "boosted_trees" : "log_linear";
}

RegressorKind parse_regressor_kind(std::string_view name) {
  if (name == "log_linear") return RegressorKind::kLogLinear;
  if (name == "boosted_trees") return RegressorKind::kBoostedTrees;
  throw ValidationError("unknown regressor kind \"" + std::string(name) + "\"");
}

double RegressionTree::predict(std::span<const double> z) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(node)];
    node = z[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(node)].value;
}

double TargetRegressor::predict(std::span<const double> x) const {
  std::vector<double> z(x.size());
  std::transform(x.begin(), x.end(), z.begin(), [](double a) { return std::log1p(a); });
  double v = 0.0;
  if (kind == RegressorKind::kLogLinear) {
    v = trend(*this, z) + interpolate_residual(*this, z);
  } else {
    v = intercept;
    for (const auto& tree : trees) v += shrinkage * tree.predict(z);
  }
  return inverse(transform, v);
}

std::string_view to_string(TargetTransform transform) {
  switch (transform) {
    case TargetTransform::kLogPositive: return "log";
    case TargetTransform::kLogNegative: return "log_negated";
    case TargetTransform::kLog1p: return "log1p";
    case TargetTransform::kIdentity: return "identity";
  }
  return "identity";
}

TargetTransform parse_target_transform(std::string_view name) {
  for (auto t : {TargetTransform::kIdentity, TargetTransform::kLogPositive,
                 TargetTransform::kLogNegative, TargetTransform::kLog1p}) {
    if (to_string(t) == name) return t;
  }
  throw ValidationError("unknown target transform \"" + std::string(name) + "\"");
}

TargetRegressor fit_regressor(const std::vector<std::vector<double>>& rows,
                              std::span<const double> targets,
                              const RegressorOptions& options) {
  if (rows.empty() || rows.size() != targets.size()) {
    throw FitError("regressor needs one target per training row");
  }
  const std::size_t n = rows.size();
  const std::size_t p = rows.front().size();
  Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i].size() != p) throw FitError("ragged feature rows");
    for (std::size_t j = 0; j < p; ++j) {
      if (!(rows[i][j] >= 0.0)) throw FitError("features must be non-negative");
      z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = std::log1p(rows[i][j]);
    }
  }
  TargetRegressor reg;
  reg.kind = options.kind;
  reg.transform = options.transform.value_or(choose_transform(targets));
  if (reg.transform == TargetTransform::kLog1p &&
      std::any_of(targets.begin(), targets.end(), [](double v) { return !(v >= 0.0); })) {
    throw FitError("log1p target transform needs non-negative targets");
  }
  Eigen::VectorXd t(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    t(static_cast<Eigen::Index>(i)) = forward(reg.transform, targets[i]);
  }
  if (options.kind == RegressorKind::kLogLinear) {
    if (reg.transform == TargetTransform::kIdentity) {
      // A sign-changing target cannot be fitted in log space, so the raw
      // features compete with their logs.
      Matrix both(z.rows(), 2 * z.cols());
      both << z, z.array().exp() - 1.0;
      fit_log_linear(reg, both, t, options);
    } else {
      fit_log_linear(reg, z, t, options);
    }
    if (options.residual_correction) attach_residuals(reg, z, t, options.neighbors);
  } else {
    fit_boosted(reg, z, t, options);
  }
  return reg;
}

std::vector<double> least_squares(std::span<const double> design, std::size_t cols,
                                  std::span<const double> y) {
  if (cols == 0 || design.size() != y.size() * cols) {
    throw FitError("design matrix shape does not match the observations");
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::Map<const Matrix> x(design.data(), n, static_cast<Eigen::Index>(cols));
  Eigen::Map<const Eigen::VectorXd> yy(y.data(), n);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-12);
  if (qr.rank() < static_cast<Eigen::Index>(cols)) {
    throw FitError("least squares design is rank deficient");
  }
  Eigen::VectorXd beta = qr.solve(yy);
  return std::vector<double>(beta.data(), beta.data() + beta.size());
}

}  // namespace flame::layerfit
