#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

// Small regressors mapping non-negative workload descriptors to one target.
// Inputs are always log1p-transformed; the target is log-transformed when it
// has a single strict sign across the training set.
//
// The log-linear kind adds an inverse-distance interpolation of the training
// residuals, so it reproduces training targets and follows local structure
// the linear trend misses.
namespace flame::layerfit {

enum class RegressorKind { kLogLinear, kBoostedTrees };

std::string_view to_string(RegressorKind kind);
RegressorKind parse_regressor_kind(std::string_view name);

enum class TargetTransform { kIdentity, kLogPositive, kLogNegative, kLog1p };

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> z) const;
};

struct TargetRegressor {
  RegressorKind kind = RegressorKind::kLogLinear;
  TargetTransform transform = TargetTransform::kIdentity;

  // Log-linear: intercept + sum(weights[i] * log1p(x[terms[i]])). With the
  // identity transform a term p + j stands for the raw x[j].
  std::vector<std::size_t> terms;
  std::vector<double> weights;
  double intercept = 0.0;

  // Residual correction: training inputs (log1p, divided by scale) and the
  // residuals of the trend at those points, in transformed target units.
  std::vector<double> scale;
  std::vector<std::vector<double>> anchors;
  std::vector<double> residuals;

  // Boosted trees: intercept + shrinkage * sum(tree(z)).
  double shrinkage = 0.1;
  std::vector<RegressionTree> trees;

  std::size_t neighbors = 2;

  double predict(std::span<const double> x) const;
};

std::string_view to_string(TargetTransform transform);
TargetTransform parse_target_transform(std::string_view name);

struct RegressorOptions {
  RegressorKind kind = RegressorKind::kLogLinear;
  std::size_t max_terms = 3;  // log-linear; also capped at n - 2
  std::size_t rounds = 200;   // boosted trees
  int max_depth = 2;
  double shrinkage = 0.1;
  bool residual_correction = true;
  std::size_t neighbors = 2;
  // Forces a target transform; kLog1p needs non-negative targets.
  std::optional<TargetTransform> transform;
};

// rows[i] is the feature vector of training example i. Log-linear fits use
// forward selection of log features by generalized cross-validation.
TargetRegressor fit_regressor(const std::vector<std::vector<double>>& rows,
                              std::span<const double> targets,
                              const RegressorOptions& options = {});

// Least squares on an n x p design (row-major), solved by column-pivoted QR.
// Throws FitError if the design is rank deficient.
std::vector<double> least_squares(std::span<const double> design, std::size_t cols,
                                  std::span<const double> y);

}  // namespace flame::layerfit
