#include "orthoscore/plr.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace orthoscore::plr {

double partialling_out_score(double beta, double m, double l, const Observation& w) {
  const double v = w.d - m;
  return v * ((w.y - l) - beta * v);
}

ScoreFamily partialling_out_family(const FunctionEstimate& m_hat, const FunctionEstimate& l_hat) {
  return ScoreFamily([m_hat, l_hat](double beta, const Observation& w) {
    return partialling_out_score(beta, m_hat(w.x), l_hat(w.x), w);
  });
}

FoldSolution solve_fold(const Vector& d, const Vector& y, const Vector& m_hat, const Vector& l_hat) {
  const Vector v = d - m_hat;
  const Vector u = y - l_hat;
  const double vv = v.squaredNorm();
  if (vv == 0.0) throw std::runtime_error("no residual treatment variation");
  const double beta = v.dot(u) / vv;
  const auto n = static_cast<double>(d.size());
  const Vector psi = v.cwiseProduct(u - beta * v);
  const double slope = vv / n;
  return {beta, psi.squaredNorm() / n / (slope * slope)};
}

CoupledModel least_squares_model() {
  CoupledModel m;
  m.d_beta_m = [](double beta, double f, const Observation& w) { return 2.0 * w.d * (beta * w.d + f - w.y); };
  m.d_f_m = [](double beta, double f, const Observation& w) { return 2.0 * (beta * w.d + f - w.y); };
  m.d2_beta_f_m = [](double, double, const Observation& w) { return 2.0 * w.d; };
  m.d2_ff_m = [](double, double, const Observation&) { return 2.0; };
  return m;
}

namespace {

FunctionEstimate fit_regression(const Dataset& train, const Vector& target, const PlrConfig& config,
                                std::uint64_t stream) {
  if (config.learner == Learner::mlp) {
    TrainConfig t = config.train;
    t.seed = mix_seed(config.seed, stream);
    return fit_mlp(train.x(), target, SquaredError{}, config.arch, t);
  }
  return fit_least_squares(train.x(), target);
}

}  // namespace

EstimationResult plr_crossfit(const Dataset& data, const PlrConfig& config) {
  const FoldSplit split = split_folds(static_cast<std::size_t>(data.n()), config.seed);
  const std::array<Dataset, 2> folds{data.subset(split.indices(0)), data.subset(split.indices(1))};
  std::array<double, 2> betas{};
  std::array<double, 2> variances{};
  for (int j = 0; j < 2; ++j) {
    const int k = 1 - j;
    try {
      PlrConfig fold_config = config;
      fold_config.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(j));
      const FunctionEstimate m_hat = fit_regression(folds[j], folds[j].d(), fold_config, 1);
      const FunctionEstimate l_hat = fit_regression(folds[j], folds[j].y(), fold_config, 2);
      const Dataset& eval = folds[k];
      const FoldSolution s = solve_fold(eval.d(), eval.y(), m_hat(eval.x()), l_hat(eval.x()));
      betas[k] = s.beta;
      variances[k] = s.sigma2;
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(j) + ": " + e.what());
    }
  }
  return combine_folds("plr", betas, variances, static_cast<std::size_t>(data.n()), config.level);
}

double GaussianDesign::propensity(RowRef x) { return 1.0 / (1.0 + std::exp(-(0.5 + 0.8 * x(0) - 0.5 * x(1)))); }

double GaussianDesign::baseline(RowRef x) { return std::sin(x(0)) + 0.5 * x(1) * x(1) - 0.3 * x(2); }

Dataset GaussianDesign::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto rows = static_cast<Index>(n);
  CovariateMatrix x(rows, 3);
  Vector y(rows), d(rows);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < 3; ++j) x(i, j) = normal(rng);
    d(i) = unif(rng) < propensity(x.row(i)) ? 1.0 : 0.0;
    y(i) = beta0 * d(i) + baseline(x.row(i)) + normal(rng);
  }
  return Dataset(std::move(x), std::move(y), std::move(d));
}

}  // namespace orthoscore::plr
