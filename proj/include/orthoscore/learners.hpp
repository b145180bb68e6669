#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/mlp.hpp"

#include <optional>
#include <vector>

namespace orthoscore {

/// x ↦ intercept + x·slope
struct AffineModel {
  double intercept = 0.0;
  Vector slope;

  double operator()(RowRef x) const { return intercept + x.dot(slope.transpose()); }
  FunctionEstimate to_function() const;
};

struct LeastSquaresFit {
  AffineModel model;
  double condition_estimate = 0.0;
  bool ridge_applied = false;
};

/// Weighted least squares with intercept. Weights may be negative; the normal
/// equations are solved directly on the weighted Gram matrix.
LeastSquaresFit solve_least_squares(const CovariateMatrix& x, const Vector& y,
                                    const std::optional<Vector>& weights = std::nullopt);

FunctionEstimate fit_least_squares(const CovariateMatrix& x, const Vector& y,
                                   const std::optional<Vector>& weights = std::nullopt);

struct LogisticFit {
  AffineModel log_odds;
  /// Mean cross-entropy before the first step and after every accepted step.
  std::vector<double> loss_history;
  int iterations = 0;
  bool converged = false;
};

struct LogisticOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
};

/// Affine logistic regression by damped Newton. The returned function is the
/// fitted log-odds.
LogisticFit solve_logistic(const CovariateMatrix& x, const Vector& labels,
                           const LogisticOptions& options = {});

FunctionEstimate fit_logistic(const CovariateMatrix& x, const Vector& labels,
                              const LogisticOptions& options = {});

/// Mean of log(1 + e^f) - label * f.
double cross_entropy(const Vector& logits, const Vector& labels);

/// A pluggable conditional-mean estimator: regresses `target` on `x`.
using Regressor = std::function<FunctionEstimate(const CovariateMatrix& x, const Vector& target)>;

Regressor linear_regressor();
Regressor mlp_regressor(MlpArchitecture arch, TrainConfig config);

}  // namespace orthoscore
