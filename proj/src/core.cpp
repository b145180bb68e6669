#include "orthoscore/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace orthoscore {

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

void require_binary(const Vector& v, const char* name) {
  for (Index i = 0; i < v.size(); ++i) {
    if (v(i) != 0.0 && v(i) != 1.0)
      throw std::invalid_argument(std::string(name) + " must be 0/1 (row " + std::to_string(i) + ")");
  }
}

void require_finite(const auto& m, const char* name) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(name) + " contains non-finite values");
}

}  // namespace

Dataset::Dataset(CovariateMatrix x, Vector y, Vector d, std::optional<Vector> z)
    : x_(std::move(x)), y_(std::move(y)), d_(std::move(d)), z_(std::move(z)) {
  const Index n = x_.rows();
  if (y_.size() != n || d_.size() != n || (z_ && z_->size() != n))
    throw std::invalid_argument("dataset columns differ in length");
  require_finite(x_, "x");
  require_finite(y_, "y");
  require_binary(d_, "d");
  if (z_) require_binary(*z_, "z");
}

const Vector& Dataset::z() const {
  if (!z_) throw std::logic_error("dataset has no instrument column");
  return *z_;
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const auto m = static_cast<Index>(rows.size());
  CovariateMatrix x(m, p());
  Vector y(m), d(m);
  std::optional<Vector> z;
  if (z_) z.emplace(m);
  for (Index k = 0; k < m; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    x.row(k) = x_.row(i);
    y(k) = y_(i);
    d(k) = d_(i);
    if (z_) (*z)(k) = (*z_)(i);
  }
  return Dataset(std::move(x), std::move(y), std::move(d), std::move(z));
}

Dataset Dataset::with_outcome(Vector y) const { return Dataset(x_, std::move(y), d_, z_); }

Vector FunctionModel::evaluate_batch(const CovariateMatrix& x) const {
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = evaluate(x.row(i));
  return out;
}

namespace {

class LambdaModel final : public FunctionModel {
 public:
  explicit LambdaModel(FunctionEstimate::Pointwise f) : f_(std::move(f)) {}
  double evaluate(RowRef x) const override { return f_(x); }

 private:
  FunctionEstimate::Pointwise f_;
};

class ConstantModel final : public FunctionModel {
 public:
  explicit ConstantModel(double c) : c_(c) {}
  double evaluate(RowRef) const override { return c_; }
  Vector evaluate_batch(const CovariateMatrix& x) const override {
    return Vector::Constant(x.rows(), c_);
  }

 private:
  double c_;
};

class ScaledSumModel final : public FunctionModel {
 public:
  ScaledSumModel(FunctionEstimate a, FunctionEstimate b, double scale)
      : a_(std::move(a)), b_(std::move(b)), scale_(scale) {}
  double evaluate(RowRef x) const override { return a_(x) + scale_ * b_(x); }
  Vector evaluate_batch(const CovariateMatrix& x) const override {
    return a_(x) + scale_ * b_(x);
  }

 private:
  FunctionEstimate a_;
  FunctionEstimate b_;
  double scale_;
};

}  // namespace

FunctionEstimate::FunctionEstimate(std::shared_ptr<const FunctionModel> model)
    : model_(std::move(model)) {
  if (!model_) throw std::invalid_argument("null function model");
}

FunctionEstimate::FunctionEstimate(Pointwise f)
    : model_(std::make_shared<LambdaModel>(std::move(f))) {}

FunctionEstimate FunctionEstimate::constant(double value) {
  return FunctionEstimate(std::make_shared<ConstantModel>(value));
}

FunctionEstimate FunctionEstimate::coordinate(Index j) {
  return FunctionEstimate([j](RowRef x) { return x(j); });
}

FunctionEstimate FunctionEstimate::plus_scaled(const FunctionEstimate& other, double scale) const {
  return FunctionEstimate(std::make_shared<ScaledSumModel>(*this, other, scale));
}

std::vector<Index> FoldSplit::indices(int fold) const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < fold_assignment.size(); ++i)
    if (fold_assignment[i] == fold) out.push_back(static_cast<Index>(i));
  return out;
}

std::size_t FoldSplit::size(int fold) const {
  return static_cast<std::size_t>(std::count(fold_assignment.begin(), fold_assignment.end(), fold));
}

FoldSplit split_folds(std::size_t n, std::uint64_t seed) {
  if (n < 4) throw std::invalid_argument("sample too small to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0));
  // Fisher-Yates with our own index draws so the permutation does not depend
  // on the standard library's shuffle implementation.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = rng() % (i + 1);
    std::swap(order[i], order[j]);
  }
  FoldSplit split;
  split.seed = seed;
  split.fold_assignment.assign(n, 1);
  for (std::size_t k = 0; k < n / 2; ++k) split.fold_assignment[order[k]] = 0;
  return split;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must lie in (0,1)");

  // Acklam's rational approximation, then one Halley step against erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double two_sided_quantile(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0,1)");
  if (level == 0.95) return 1.959963984540054;
  return normal_quantile(0.5 + 0.5 * level);
}

Interval make_ci(double beta_hat, double sigma2_hat, std::size_t n, double level) {
  const double q = two_sided_quantile(level);
  if (!(sigma2_hat >= 0.0)) throw std::invalid_argument("variance must be non-negative");
  if (n == 0) throw std::invalid_argument("sample size must be positive");
  const double half = q * std::sqrt(sigma2_hat / static_cast<double>(n));
  return {beta_hat - half, beta_hat + half};
}

EstimationResult combine_folds(std::string method, std::span<const double> fold_betas,
                               std::span<const double> fold_sigma2, std::size_t n, double level) {
  if (fold_betas.empty() || fold_betas.size() != fold_sigma2.size())
    throw std::invalid_argument("fold estimates and variances must be non-empty and aligned");
  const auto k = static_cast<double>(fold_betas.size());
  EstimationResult r;
  r.method = std::move(method);
  r.n = n;
  r.fold_betas.assign(fold_betas.begin(), fold_betas.end());
  r.beta_hat = std::accumulate(fold_betas.begin(), fold_betas.end(), 0.0) / k;
  r.sigma2_hat = std::accumulate(fold_sigma2.begin(), fold_sigma2.end(), 0.0) / k;
  r.std_err = std::sqrt(r.sigma2_hat / static_cast<double>(n));
  const Interval ci = make_ci(r.beta_hat, r.sigma2_hat, n, level);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  return r;
}

std::size_t default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace orthoscore
