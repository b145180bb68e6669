#include "orthoscore/qte.hpp"

#include "orthoscore/late.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace orthoscore::qte {

using late::clipped_propensity;

void QteConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
  if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw std::invalid_argument("clip epsilon must lie in (0, 0.5)");
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  arch.validate();
  train.validate();
}

double ipw_score(double beta, double f, const Observation& w, double tau, double clip_epsilon) {
  const double g = clipped_propensity(f, clip_epsilon);
  return w.d / g * ((w.y <= beta ? 1.0 : 0.0) - tau);
}

double orthogonal_score(double beta, double f, double h, const Observation& w, double tau, double clip_epsilon) {
  const double g = clipped_propensity(f, clip_epsilon);
  return w.d / g * ((w.y <= beta ? 1.0 : 0.0) - tau) + (g - w.d) * h;
}

DecoupledModel ipw_as_decoupled(double tau, double clip_epsilon) {
  DecoupledModel m;
  m.psi = [=](double beta, double f, const Observation& w) { return ipw_score(beta, f, w, tau, clip_epsilon); };
  m.d_f_psi = [=](double beta, double f, const Observation& w) {
    const double g = clipped_propensity(f, clip_epsilon);
    return -w.d * (1.0 - g) / g * ((w.y <= beta ? 1.0 : 0.0) - tau);
  };
  m.d_f_m1 = [=](double f, const Observation& w) { return clipped_propensity(f, clip_epsilon) - w.d; };
  m.d2_ff_m1 = [=](double f, const Observation&) {
    const double g = clipped_propensity(f, clip_epsilon);
    return g * (1.0 - g);
  };
  m.solve = SolveKind::monotone;
  return m;
}

double solve_quantile_equation(const Vector& y, const Vector& d, const Vector& g, const Vector& h, double tau,
                               double tol) {
  if (y.size() == 0) throw std::runtime_error("empty fold");
  const Vector weight = d.cwiseQuotient(g);
  const double correction = (g - d).dot(h);
  const auto n = static_cast<double>(y.size());
  auto mean_score = [&](double beta) {
    double s = correction;
    for (Index i = 0; i < y.size(); ++i) s += weight(i) * ((y(i) <= beta ? 1.0 : 0.0) - tau);
    return s / n;
  };
  return solve_monotone(mean_score, {y.minCoeff(), y.maxCoeff()}, tol);
}

namespace {

double quartile_spread(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return at(0.75) - at(0.25);
}

}  // namespace

double treated_density(const Vector& y, const Vector& d, const Vector& g, double at) {
  std::vector<double> treated;
  std::vector<double> weights;
  for (Index i = 0; i < y.size(); ++i) {
    if (d(i) == 1.0) {
      treated.push_back(y(i));
      weights.push_back(1.0 / g(i));
    }
  }
  if (treated.size() < 2) throw std::runtime_error("too few treated observations for density");
  const auto m = static_cast<double>(treated.size());
  double mean = 0.0;
  for (double v : treated) mean += v;
  mean /= m;
  double ss = 0.0;
  for (double v : treated) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (m - 1.0));
  double spread = std::min(sd, quartile_spread(treated) / 1.34);
  if (spread <= 0.0) spread = sd;
  if (spread <= 0.0) throw std::runtime_error("treated outcomes are constant");
  const double bw = 0.9 * spread * std::pow(m, -0.2);

  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < treated.size(); ++i) {
    const double u = (at - treated[i]) / bw;
    num += weights[i] * std::exp(-0.5 * u * u);
    den += weights[i];
  }
  return num / (den * bw * std::sqrt(2.0 * std::numbers::pi));
}

namespace {

FunctionEstimate fit_log_odds(const Dataset& train, const QteConfig& config) {
  const Vector& d = train.d();
  const double share = d.mean();
  if (share == 0.0 || share == 1.0) throw std::runtime_error("degenerate treatment");
  if (config.propensity == Learner::mlp) {
    TrainConfig t = config.train;
    t.seed = mix_seed(config.seed, 1);
    return fit_mlp(train.x(), d, CrossEntropyOnLogits{}, config.arch, t);
  }
  return fit_logistic(train.x(), d);
}

Vector propensities(const FunctionEstimate& f_hat, const CovariateMatrix& x, double eps) {
  return f_hat(x).unaryExpr([eps](double f) { return clipped_propensity(f, eps); });
}

}  // namespace

EstimationResult qte_crossfit(const Dataset& data, const QteConfig& config) {
  config.validate();
  const FoldSplit split = split_folds(static_cast<std::size_t>(data.n()), config.seed);
  const std::array<Dataset, 2> folds{data.subset(split.indices(0)), data.subset(split.indices(1))};
  std::array<double, 2> betas{};
  std::array<double, 2> variances{};
  for (int j = 0; j < 2; ++j) {
    const int k = 1 - j;
    try {
      QteConfig fc = config;
      fc.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(j));
      const Dataset& train = folds[j];
      const FunctionEstimate f_hat = fit_log_odds(train, fc);
      const Vector g_train = propensities(f_hat, train.x(), fc.clip_epsilon);

      const Vector zeros = Vector::Zero(train.n());
      const double pilot = solve_quantile_equation(train.y(), train.d(), g_train, zeros, fc.tau, fc.tol);

      Vector pseudo(train.n());
      for (Index i = 0; i < train.n(); ++i) {
        const double g = g_train(i);
        pseudo(i) = train.d()(i) * ((train.y()(i) <= pilot ? 1.0 : 0.0) - fc.tau) / (g * g);
      }
      FunctionEstimate h_hat = FunctionEstimate::zero();
      if (fc.correction == Learner::mlp) {
        TrainConfig t = fc.train;
        t.seed = mix_seed(fc.seed, 2);
        h_hat = fit_mlp(train.x(), pseudo, SquaredError{}, fc.arch, t);
      } else {
        h_hat = fit_least_squares(train.x(), pseudo);
      }

      const Dataset& eval = folds[k];
      const Vector g_eval = propensities(f_hat, eval.x(), fc.clip_epsilon);
      const Vector h_eval = h_hat(eval.x());
      const double beta = solve_quantile_equation(eval.y(), eval.d(), g_eval, h_eval, fc.tau, fc.tol);

      const ScoreFamily score = build_decoupled_score(ipw_as_decoupled(fc.tau, fc.clip_epsilon), f_hat, h_hat);
      const double density = treated_density(eval.y(), eval.d(), g_eval, beta);
      if (!(density > 0.0)) throw std::runtime_error("density estimate vanished at the quantile");
      betas[k] = beta;
      variances[k] = estimate_variance(score, beta, eval) / (density * density);
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(j) + ": " + e.what());
    }
  }
  return combine_folds("qte", betas, variances, static_cast<std::size_t>(data.n()), config.level);
}

double GaussianDesign::log_odds(RowRef x) { return 0.5 * x(0) - 0.25 * x(1); }

double GaussianDesign::quantile() const { return std::numbers::sqrt2 * normal_quantile(tau); }

double GaussianDesign::correction(RowRef x) const {
  const double g = late::expit(log_odds(x));
  const double cdf = 0.5 * std::erfc(-(quantile() - x(0)) / std::numbers::sqrt2);
  return (cdf - tau) / g;
}

Dataset GaussianDesign::sample(std::size_t n, std::uint64_t seed) const {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto rows = static_cast<Index>(n);
  CovariateMatrix x(rows, 2);
  Vector y(rows), d(rows);
  for (Index i = 0; i < rows; ++i) {
    x(i, 0) = normal(rng);
    x(i, 1) = normal(rng);
    d(i) = unif(rng) < late::expit(log_odds(x.row(i))) ? 1.0 : 0.0;
    const double e = normal(rng);
    y(i) = d(i) == 1.0 ? x(i, 0) + e : e;
  }
  return Dataset(std::move(x), std::move(y), std::move(d));
}

}  // namespace orthoscore::qte
