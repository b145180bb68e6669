#include "catch_amalgamated.hpp"

#include "orthoscore/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

using namespace orthoscore;
using Catch::Approx;

namespace {

Dataset small_dataset(Index n) {
  CovariateMatrix x(n, 2);
  Vector y(n), d(n), z(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = -static_cast<double>(i);
    y(i) = 0.5 * static_cast<double>(i);
    d(i) = static_cast<double>(i % 2);
    z(i) = static_cast<double>((i / 2) % 2);
  }
  return Dataset(x, y, d, z);
}

}  // namespace

TEST_CASE("mix_seed is deterministic and spreads nearby inputs") {
  CHECK(mix_seed(1, 2) == mix_seed(1, 2));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
  std::set<std::uint64_t> seen;
  for (std::uint64_t j = 0; j < 1000; ++j) seen.insert(mix_seed(42, j));
  CHECK(seen.size() == 1000);
}

TEST_CASE("Dataset validates its columns") {
  CovariateMatrix x = CovariateMatrix::Zero(3, 1);
  Vector y = Vector::Zero(3);
  Vector d = Vector::Zero(3);
  CHECK_THROWS_AS(Dataset(x, Vector::Zero(2), d), std::invalid_argument);
  Vector bad_d = d;
  bad_d(1) = 0.5;
  CHECK_THROWS_AS(Dataset(x, y, bad_d), std::invalid_argument);
  Vector bad_z = Vector::Constant(3, 2.0);
  CHECK_THROWS_AS(Dataset(x, y, d, bad_z), std::invalid_argument);
  Vector nan_y = y;
  nan_y(0) = std::nan("");
  CHECK_THROWS_AS(Dataset(x, nan_y, d), std::invalid_argument);

  const Dataset ok(x, y, d);
  CHECK_FALSE(ok.has_instrument());
  CHECK_THROWS(ok.z());
  CHECK(ok.observation(0).z == 0.0);
}

TEST_CASE("Dataset subset keeps rows in the requested order") {
  const Dataset data = small_dataset(10);
  const std::vector<Index> rows{7, 2, 5};
  const Dataset sub = data.subset(rows);
  REQUIRE(sub.n() == 3);
  CHECK(sub.x()(0, 0) == 7.0);
  CHECK(sub.y()(1) == 1.0);
  CHECK(sub.d()(2) == 1.0);
  CHECK(sub.z()(0) == 1.0);
  const Dataset zeroed = data.with_outcome(Vector::Zero(10));
  CHECK(zeroed.y().isZero());
  CHECK(zeroed.d() == data.d());
}

TEST_CASE("split_folds balances and partitions") {
  SECTION("n=4") {
    const FoldSplit s = split_folds(4, 123);
    CHECK(s.size(0) == 2);
    CHECK(s.size(1) == 2);
  }
  SECTION("n=5") {
    const FoldSplit s = split_folds(5, 9);
    CHECK(std::min(s.size(0), s.size(1)) == 2);
    CHECK(std::max(s.size(0), s.size(1)) == 3);
  }
  SECTION("bijection for many sizes and seeds") {
    for (std::size_t n : {4u, 5u, 17u, 100u, 1001u}) {
      for (std::uint64_t seed : {0u, 1u, 99u}) {
        const FoldSplit s = split_folds(n, seed);
        auto a = s.indices(0);
        const auto b = s.indices(1);
        CHECK(a.size() + b.size() == n);
        CHECK((a.size() > b.size() ? a.size() - b.size() : b.size() - a.size()) <= 1);
        a.insert(a.end(), b.begin(), b.end());
        std::sort(a.begin(), a.end());
        std::vector<Index> expected(n);
        std::iota(expected.begin(), expected.end(), Index{0});
        CHECK(a == expected);
      }
    }
  }
  SECTION("deterministic") {
    CHECK(split_folds(1000, 7).fold_assignment == split_folds(1000, 7).fold_assignment);
    CHECK(split_folds(1000, 7).fold_assignment != split_folds(1000, 8).fold_assignment);
  }
  CHECK_THROWS(split_folds(3, 0));
}

TEST_CASE("normal_quantile matches reference values") {
  CHECK(normal_quantile(0.975) == Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.9) == Approx(1.2815515655446004).epsilon(1e-12));
  CHECK(normal_quantile(0.01) == Approx(-2.3263478740408408).epsilon(1e-12));
  CHECK(std::abs(normal_quantile(0.5)) < 1e-15);
  for (double p : {1e-10, 1e-4, 0.02, 0.3, 0.7, 0.98, 1 - 1e-6}) {
    const double q = normal_quantile(p);
    CHECK(0.5 * std::erfc(-q / std::sqrt(2.0)) == Approx(p).epsilon(1e-10));
    CHECK(normal_quantile(1 - p) == Approx(-q).epsilon(1e-8));
  }
  CHECK_THROWS(normal_quantile(0.0));
  CHECK_THROWS(normal_quantile(1.0));
  CHECK(two_sided_quantile(0.95) == 1.959963984540054);
  CHECK(two_sided_quantile(0.9) == Approx(1.6448536269514722).epsilon(1e-10));
}

TEST_CASE("make_ci") {
  const Interval unit = make_ci(0.0, 1.0, 1);
  CHECK(unit.low == Approx(-1.959964).margin(1e-6));
  CHECK(unit.high == Approx(1.959964).margin(1e-6));
  const Interval degenerate = make_ci(1.8, 0.0, 100);
  CHECK(degenerate.low == 1.8);
  CHECK(degenerate.high == 1.8);
  const Interval hand = make_ci(2.0, 4.0, 400);
  CHECK(hand.low == Approx(1.804).margin(1e-6));
  CHECK(hand.high == Approx(2.196).margin(1e-6));
  CHECK_THROWS(make_ci(0.0, -1.0, 10));
  CHECK_THROWS(make_ci(0.0, 1.0, 0));
  CHECK_THROWS(make_ci(0.0, 1.0, 10, 1.0));
}

TEST_CASE("combine_folds averages and reports a consistent interval") {
  const std::vector<double> betas{1.0, 3.0};
  const std::vector<double> vars{2.0, 4.0};
  const EstimationResult r = combine_folds("x", betas, vars, 300);
  CHECK(r.beta_hat == 2.0);
  CHECK(r.sigma2_hat == 3.0);
  CHECK(r.std_err == Approx(std::sqrt(3.0 / 300.0)));
  CHECK(r.ci_low <= r.beta_hat);
  CHECK(r.beta_hat <= r.ci_high);
  CHECK(r.fold_betas == betas);
  CHECK(r.method == "x");
  CHECK(r.n == 300);
}

TEST_CASE("FunctionEstimate helpers") {
  RowVector x(3);
  x << 0.5, -2.0, 4.0;
  CHECK(FunctionEstimate::constant(2.5)(x) == 2.5);
  CHECK(FunctionEstimate::coordinate(1)(x) == -2.0);
  const auto f = FunctionEstimate::coordinate(0).plus_scaled(FunctionEstimate::coordinate(2), -0.5);
  CHECK(f(x) == Approx(-1.5));
  CovariateMatrix batch(2, 3);
  batch << 1, 2, 3, 4, 5, 6;
  const Vector out = f(batch);
  CHECK(out(0) == Approx(-0.5));
  CHECK(out(1) == Approx(1.0));
}

TEST_CASE("parallel_map keeps index order and rethrows the first failure") {
  for (std::size_t jobs : {1u, 3u, 8u}) {
    const auto v = parallel_map(50, jobs, [](std::size_t i) { return i * i; });
    REQUIRE(v.size() == 50);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == i * i);
  }
  auto failing = [](std::size_t i) -> int {
    if (i == 7 || i == 30) throw std::runtime_error("boom " + std::to_string(i));
    return 0;
  };
  for (std::size_t jobs : {1u, 4u}) {
    try {
      parallel_map(40, jobs, failing);
      FAIL("expected an exception");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()) == "boom 7");
    }
  }
}
