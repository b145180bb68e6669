#include "catch_amalgamated.hpp"

#include "orthoscore/learners.hpp"

#include <cmath>
#include <random>

using namespace orthoscore;
using Catch::Approx;

namespace {

struct Design {
  CovariateMatrix x;
  Vector y;
  Vector w;
};

Design random_design(Index n, Index p, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 3.0);
  Design d{CovariateMatrix(n, p), Vector(n), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    double mean = 0.7;
    for (Index j = 0; j < p; ++j) {
      d.x(i, j) = normal(rng);
      mean += (j + 1) * 0.3 * d.x(i, j);
    }
    d.y(i) = mean + normal(rng);
    d.w(i) = unif(rng);
  }
  return d;
}

// sqrt(w)-scaled QR of [1, x]: an independent route to the weighted normal equations.
Vector weighted_oracle(const CovariateMatrix& x, const Vector& y, const Vector& w) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  const Vector s = w.cwiseSqrt();
  const Matrix sa = s.asDiagonal() * a;
  const Vector sy = s.cwiseProduct(y);
  return sa.colPivHouseholderQr().solve(sy);
}

}  // namespace

TEST_CASE("least squares hand cases") {
  CovariateMatrix x(2, 1);
  x << 1, 2;
  Vector y(2);
  y << 2, 4;
  CHECK_THROWS_WITH(solve_least_squares(CovariateMatrix::Ones(2, 2), y), "underdetermined");
  CHECK(solve_least_squares(x, y).model.slope(0) == Approx(2.0));

  CovariateMatrix x3(3, 1);
  x3 << 0, 1, 2;
  Vector y3(3);
  y3 << 0, 1, 4;
  Vector w(3);
  w << 1, 1, 0;
  const FunctionEstimate f = fit_least_squares(x3, y3, w);
  RowVector at(1);
  at << 2.0;
  CHECK(f(at) == Approx(2.0).margin(1e-10));
  at << 3.0;
  CHECK(f(at) == Approx(3.0).margin(1e-10));
}

TEST_CASE("least squares on a constant outcome returns the constant") {
  const Design d = random_design(50, 3, 1);
  const auto fit = solve_least_squares(d.x, Vector::Constant(50, 2.5));
  CHECK(fit.model.intercept == Approx(2.5).margin(1e-10));
  CHECK(fit.model.slope.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("weighted least squares matches the normal-equation oracle") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Design d = random_design(200, 4, seed);
    const auto fit = solve_least_squares(d.x, d.y, d.w);
    const Vector oracle = weighted_oracle(d.x, d.y, d.w);
    CHECK(std::abs(fit.model.intercept - oracle(0)) < 1e-8);
    CHECK((fit.model.slope - oracle.tail(4)).cwiseAbs().maxCoeff() < 1e-8);
    CHECK_FALSE(fit.ridge_applied);
  }
}

TEST_CASE("unit weights reproduce the unweighted fit") {
  const Design d = random_design(120, 3, 5);
  const auto a = solve_least_squares(d.x, d.y);
  const auto b = solve_least_squares(d.x, d.y, Vector::Ones(120));
  CHECK(std::abs(a.model.intercept - b.model.intercept) < 1e-10);
  CHECK((a.model.slope - b.model.slope).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("collinear design triggers the ridge fallback") {
  Design d = random_design(100, 3, 2);
  d.x.col(2) = d.x.col(0);
  const auto fit = solve_least_squares(d.x, d.y);
  CHECK(fit.ridge_applied);
  CHECK(fit.model.slope.allFinite());
}

TEST_CASE("logistic regression recovers a no-signal intercept") {
  Rng rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = 4000;
  CovariateMatrix x(n, 2);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    labels(i) = i % 2 == 0 ? 1.0 : 0.0;
  }
  const LogisticFit fit = solve_logistic(x, labels);
  CHECK(fit.converged);
  CHECK(std::abs(fit.log_odds.intercept) < 0.05);
  // labels are independent of x; slope standard error is about 2/√n
  CHECK(fit.log_odds.slope.cwiseAbs().maxCoeff() < 4.0 * 2.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("logistic loss never increases across Newton steps") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index n = 300;
    CovariateMatrix x(n, 3);
    Vector labels(n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < 3; ++j) x(i, j) = normal(rng);
      const double f = 0.3 + 1.5 * x(i, 0) - x(i, 1) * x(i, 2);
      labels(i) = unif(rng) < 1.0 / (1.0 + std::exp(-f)) ? 1.0 : 0.0;
    }
    const LogisticFit fit = solve_logistic(x, labels);
    REQUIRE(fit.loss_history.size() >= 2);
    for (std::size_t k = 1; k < fit.loss_history.size(); ++k)
      CHECK(fit.loss_history[k] <= fit.loss_history[k - 1]);
  }
}

TEST_CASE("logistic fit on separable data stays finite and increasing") {
  const Index n = 200;
  CovariateMatrix x(n, 1);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = i % 2 == 0 ? -1.0 : 1.0;
    labels(i) = i % 2 == 0 ? 0.0 : 1.0;
  }
  const LogisticFit fit = solve_logistic(x, labels);
  CHECK(std::isfinite(fit.log_odds.intercept));
  CHECK(std::isfinite(fit.log_odds.slope(0)));
  CHECK(fit.log_odds.slope(0) > 0.0);

  // brute-force grid: the loss keeps decreasing in the slope direction
  auto loss_at = [&](double b) {
    Vector logits = b * x.col(0);
    return cross_entropy(logits, labels);
  };
  double best = 0.0;
  double best_loss = loss_at(0.0);
  for (double b = -10.0; b <= 10.0; b += 0.5) {
    if (loss_at(b) < best_loss) {
      best_loss = loss_at(b);
      best = b;
    }
  }
  CHECK(best > 0.0);
}

TEST_CASE("logistic rejects degenerate labels") {
  CovariateMatrix x = CovariateMatrix::Random(10, 2);
  CHECK_THROWS_WITH(solve_logistic(x, Vector::Ones(10)), "degenerate labels");
  CHECK_THROWS_WITH(solve_logistic(x, Vector::Zero(10)), "degenerate labels");
}

TEST_CASE("logistic gradient is zero at the optimum") {
  Rng rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index n = 500;
  CovariateMatrix x(n, 2);
  Vector labels(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    labels(i) = unif(rng) < 1.0 / (1.0 + std::exp(-(0.5 - x(i, 0)))) ? 1.0 : 0.0;
  }
  const LogisticFit fit = solve_logistic(x, labels);
  const FunctionEstimate f = fit.log_odds.to_function();
  const Vector logits = f(x);
  const Vector r = logits.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }) - labels;
  CHECK(std::abs(r.mean()) < 1e-7);
  CHECK(std::abs(r.dot(x.col(0)) / n) < 1e-7);
  CHECK(std::abs(r.dot(x.col(1)) / n) < 1e-7);
}

TEST_CASE("linear regressor is deterministic") {
  const Design d = random_design(80, 2, 4);
  const Regressor reg = linear_regressor();
  const Vector a = reg(d.x, d.y)(d.x);
  const Vector b = reg(d.x, d.y)(d.x);
  CHECK(a == b);
}
