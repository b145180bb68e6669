#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace orthoscore {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
// Covariates are stored row-major so a single observation is a contiguous row.
using CovariateMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowRef = Eigen::Ref<const RowVector>;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

/// SplitMix64 finaliser; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

/// One row of a Dataset. `z` is 0 when the dataset has no instrument.
struct Observation {
  RowRef x;
  double y;
  double d;
  double z;
};

/// Immutable columnar sample W = (X, D, Y, Z).
class Dataset {
 public:
  Dataset(CovariateMatrix x, Vector y, Vector d, std::optional<Vector> z = std::nullopt);

  Index n() const { return x_.rows(); }
  Index p() const { return x_.cols(); }
  bool has_instrument() const { return z_.has_value(); }

  const CovariateMatrix& x() const { return x_; }
  const Vector& y() const { return y_; }
  const Vector& d() const { return d_; }
  const Vector& z() const;

  Observation observation(Index i) const {
    return Observation{x_.row(i), y_(i), d_(i), z_ ? (*z_)(i) : 0.0};
  }

  Dataset subset(std::span<const Index> rows) const;
  Dataset with_outcome(Vector y) const;

 private:
  CovariateMatrix x_;
  Vector y_;
  Vector d_;
  std::optional<Vector> z_;
};

/// Interface behind FunctionEstimate. Implementations must be immutable.
class FunctionModel {
 public:
  virtual ~FunctionModel() = default;
  virtual double evaluate(RowRef x) const = 0;
  virtual Vector evaluate_batch(const CovariateMatrix& x) const;
};

/// A fitted real-valued function of the covariates. Cheap to copy, shares the
/// underlying immutable model.
class FunctionEstimate {
 public:
  using Pointwise = std::function<double(RowRef)>;

  explicit FunctionEstimate(std::shared_ptr<const FunctionModel> model);
  explicit FunctionEstimate(Pointwise f);

  static FunctionEstimate constant(double value);
  static FunctionEstimate zero() { return constant(0.0); }
  static FunctionEstimate coordinate(Index j);

  template <typename Derived>
    requires(Derived::RowsAtCompileTime == 1)
  double operator()(const Eigen::MatrixBase<Derived>& x) const {
    return model_->evaluate(x);
  }
  Vector operator()(const CovariateMatrix& x) const { return model_->evaluate_batch(x); }

  /// x ↦ this(x) + scale * other(x)
  FunctionEstimate plus_scaled(const FunctionEstimate& other, double scale) const;

  const FunctionModel& model() const { return *model_; }

 private:
  std::shared_ptr<const FunctionModel> model_;
};

/// Two-way random partition of 0..n-1.
struct FoldSplit {
  std::vector<int> fold_assignment;
  std::uint64_t seed = 0;

  std::vector<Index> indices(int fold) const;
  std::size_t size(int fold) const;
};

FoldSplit split_folds(std::size_t n, std::uint64_t seed);

struct EstimationResult {
  double beta_hat = 0.0;
  double sigma2_hat = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> fold_betas;
  std::string method;
  std::size_t n = 0;
};

/// Standard-normal quantile function. Accurate to ~1e-15 in (1e-300, 1 - 1e-16).
double normal_quantile(double p);

/// Two-sided normal-approximation interval half width quantile for `level`.
double two_sided_quantile(double level);

struct Interval {
  double low;
  double high;
};

Interval make_ci(double beta_hat, double sigma2_hat, std::size_t n, double level = 0.95);

/// Averages per-fold estimates and variances into a pooled result.
EstimationResult combine_folds(std::string method, std::span<const double> fold_betas,
                               std::span<const double> fold_sigma2, std::size_t n,
                               double level = 0.95);

/// Runs fn(0..count-1) on up to `jobs` threads. Results are returned in index
/// order regardless of scheduling.
template <typename Fn>
auto parallel_map(std::size_t count, std::size_t jobs, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))>;

std::size_t default_jobs();

}  // namespace orthoscore

#include "orthoscore/detail/parallel.hpp"
