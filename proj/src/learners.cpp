#include "orthoscore/learners.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace orthoscore {

namespace {

class AffineFunction final : public FunctionModel {
 public:
  explicit AffineFunction(AffineModel m) : m_(std::move(m)) {}
  double evaluate(RowRef x) const override { return m_(x); }
  Vector evaluate_batch(const CovariateMatrix& x) const override {
    return (x * m_.slope).array() + m_.intercept;
  }

 private:
  AffineModel m_;
};

Matrix with_intercept(const CovariateMatrix& x) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

AffineModel split_coefficients(const Vector& coef) {
  AffineModel m;
  m.intercept = coef(0);
  m.slope = coef.tail(coef.size() - 1);
  return m;
}

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

FunctionEstimate AffineModel::to_function() const {
  return FunctionEstimate(std::make_shared<AffineFunction>(*this));
}

LeastSquaresFit solve_least_squares(const CovariateMatrix& x, const Vector& y,
                                    const std::optional<Vector>& weights) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (y.size() != n) throw std::invalid_argument("least squares: x and y differ in length");
  if (weights && weights->size() != n) throw std::invalid_argument("least squares: weights have the wrong length");
  if (n <= p) throw std::invalid_argument("underdetermined");
  if (!x.allFinite() || !y.allFinite() || (weights && !weights->allFinite()))
    throw std::invalid_argument("least squares: non-finite inputs");

  const Matrix a = with_intercept(x);
  Matrix gram;
  Vector rhs;
  if (weights) {
    gram = a.transpose() * weights->asDiagonal() * a;
    rhs = a.transpose() * weights->cwiseProduct(y);
  } else {
    gram = a.transpose() * a;
    rhs = a.transpose() * y;
  }

  LeastSquaresFit fit;
  const Vector sv = Eigen::JacobiSVD<Matrix>(gram).singularValues();
  const double smallest = sv(sv.size() - 1);
  fit.condition_estimate = smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  if (fit.condition_estimate > 1e12) {
    const double ridge = 1e-8 * std::abs(gram.trace()) / static_cast<double>(std::max<Index>(p, 1));
    gram.diagonal().array() += ridge > 0.0 ? ridge : 1e-8;
    fit.ridge_applied = true;
  }
  fit.model = split_coefficients(gram.fullPivLu().solve(rhs));
  return fit;
}

FunctionEstimate fit_least_squares(const CovariateMatrix& x, const Vector& y, const std::optional<Vector>& weights) {
  return solve_least_squares(x, y, weights).model.to_function();
}

double cross_entropy(const Vector& logits, const Vector& labels) {
  double total = 0.0;
  for (Index i = 0; i < logits.size(); ++i) total += softplus(logits(i)) - labels(i) * logits(i);
  return total / static_cast<double>(logits.size());
}

LogisticFit solve_logistic(const CovariateMatrix& x, const Vector& labels, const LogisticOptions& options) {
  const Index n = x.rows();
  if (labels.size() != n) throw std::invalid_argument("logistic: x and labels differ in length");
  if (n == 0 || !x.allFinite()) throw std::invalid_argument("logistic: empty or non-finite design");
  const double positives = labels.sum();
  for (Index i = 0; i < n; ++i)
    if (labels(i) != 0.0 && labels(i) != 1.0) throw std::invalid_argument("logistic: labels must be 0/1");
  if (positives == 0.0 || positives == static_cast<double>(n)) throw std::invalid_argument("degenerate labels");

  const Matrix a = with_intercept(x);
  const double nd = static_cast<double>(n);
  Vector coef = Vector::Zero(a.cols());
  const double rate = positives / nd;
  coef(0) = std::log(rate / (1.0 - rate));

  LogisticFit fit;
  Vector eta = a * coef;
  double loss = cross_entropy(eta, labels);
  fit.loss_history.push_back(loss);

  for (int it = 0; it < options.max_iterations; ++it) {
    Vector prob(n), curvature(n);
    for (Index i = 0; i < n; ++i) {
      prob(i) = sigmoid(eta(i));
      curvature(i) = prob(i) * (1.0 - prob(i));
    }
    const Vector grad = a.transpose() * (prob - labels) / nd;
    if (grad.norm() <= options.gradient_tolerance) {
      fit.converged = true;
      break;
    }
    Matrix hessian = a.transpose() * curvature.asDiagonal() * a / nd;
    hessian.diagonal().array() += 1e-10;
    const Vector direction = hessian.ldlt().solve(grad);

    // Step halving keeps the loss sequence non-increasing.
    double t = 1.0;
    bool accepted = false;
    while (t > 1e-12) {
      const Vector trial = coef - t * direction;
      const Vector trial_eta = a * trial;
      const double trial_loss = cross_entropy(trial_eta, labels);
      if (std::isfinite(trial_loss) && trial_loss <= loss) {
        coef = trial;
        eta = trial_eta;
        accepted = trial_loss < loss;
        loss = trial_loss;
        break;
      }
      t *= 0.5;
    }
    fit.iterations = it + 1;
    fit.loss_history.push_back(loss);
    if (!accepted) {
      fit.converged = true;  // no further decrease available in double precision
      break;
    }
  }
  fit.log_odds = split_coefficients(coef);
  return fit;
}

FunctionEstimate fit_logistic(const CovariateMatrix& x, const Vector& labels, const LogisticOptions& options) {
  return solve_logistic(x, labels, options).log_odds.to_function();
}

Regressor linear_regressor() {
  return [](const CovariateMatrix& x, const Vector& target) { return fit_least_squares(x, target); };
}

Regressor mlp_regressor(MlpArchitecture arch, TrainConfig config) {
  return [arch, config](const CovariateMatrix& x, const Vector& target) {
    return fit_mlp(x, target, SquaredError{}, arch, config);
  };
}

}  // namespace orthoscore
