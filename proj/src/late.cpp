#include "orthoscore/late.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace orthoscore::late {

namespace {

constexpr std::array<std::string_view, 5> kLabels{"r-np", "r-lr", "m", "reg-np", "reg-lr"};

// Seed streams for the individual nuisance fits within one fold.
enum class Stream : std::uint64_t { propensity = 1, correction = 2, larf0 = 3, larf1 = 4 };

TrainConfig stream_config(const LateConfig& config, Stream stream) {
  TrainConfig t = config.train;
  t.seed = mix_seed(config.seed, static_cast<std::uint64_t>(stream));
  // signed-weight LARF fits keep the full epoch budget
  if (stream == Stream::propensity || stream == Stream::correction) t.validation_fraction = config.validation_fraction;
  return t;
}

bool is_regression(Method m) { return m == Method::reg_np || m == Method::reg_lr; }

double logit(double g) { return std::log(g / (1.0 - g)); }

}  // namespace

std::string_view method_label(Method m) { return kLabels[static_cast<std::size_t>(m)]; }

Method parse_method(std::string_view label) {
  for (std::size_t i = 0; i < kLabels.size(); ++i)
    if (kLabels[i] == label) return static_cast<Method>(i);
  throw std::invalid_argument("unknown method '" + std::string(label) + "' (expected r-np, r-lr, m, reg-np, reg-lr)");
}

void LateConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 0.5)) throw std::invalid_argument("clip_epsilon must lie in (0, 0.5)");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0,1)");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  arch.validate();
  train.validate();
}

bool LateConfig::uses_mlp_propensity() const {
  switch (propensity) {
    case PropensityLearner::logistic:
      return false;
    case PropensityLearner::mlp:
      return true;
    case PropensityLearner::automatic:
      break;
  }
  return method == Method::robust_np || method == Method::reg_np;
}

Kappa kappa(double d, double z, double g) {
  if (!(g > 0.0 && g < 1.0)) throw std::invalid_argument("kappa: propensity must lie in (0,1)");
  const double denom = (1.0 - g) * g;
  return {(1.0 - d) * ((1.0 - z) - (1.0 - g)) / denom, d * (z - g) / denom};
}

double expit(double f) {
  if (f >= 0.0) return 1.0 / (1.0 + std::exp(-f));
  const double e = std::exp(f);
  return e / (1.0 + e);
}

double clip_probability(double g, double epsilon) { return std::clamp(g, epsilon, 1.0 - epsilon); }

double clipped_propensity(double f, double epsilon) { return clip_probability(expit(f), epsilon); }

FunctionEstimate estimate_log_odds(const Dataset& train, const LateConfig& config) {
  const Vector& z = train.z();
  const double ones = z.sum();
  if (ones == 0.0 || ones == static_cast<double>(z.size())) throw std::runtime_error("degenerate instrument");
  if (config.uses_mlp_propensity())
    return fit_mlp(train.x(), z, CrossEntropyOnLogits{}, config.arch, stream_config(config, Stream::propensity));
  return fit_logistic(train.x(), z);
}

Vector h_pseudo_outcome(const Dataset& train, const FunctionEstimate& f_hat, double clip_epsilon) {
  const Vector f = f_hat(train.x());
  const Vector& z = train.z();
  Vector t(train.n());
  for (Index i = 0; i < train.n(); ++i) {
    const double e = std::exp(logit(clipped_propensity(f(i), clip_epsilon)));
    t(i) = train.y()(i) * ((e * e - 1.0) / e * z(i) - e);
  }
  if (!t.allFinite()) throw std::logic_error("non-finite correction pseudo-outcome");
  return t;
}

FunctionEstimate estimate_h(const Dataset& train, const FunctionEstimate& f_hat, const LateConfig& config) {
  const Vector t = h_pseudo_outcome(train, f_hat, config.clip_epsilon);
  if (config.method == Method::robust_np)
    return fit_mlp(train.x(), t, SquaredError{}, config.arch, stream_config(config, Stream::correction));
  return fit_least_squares(train.x(), t);
}

FunctionEstimate fit_larf(const Dataset& train, const FunctionEstimate& f_hat, int arm, const LateConfig& config) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("arm must be 0 or 1");
  const Vector f = f_hat(train.x());
  const Vector& z = train.z();
  Vector weights(train.n());
  for (Index i = 0; i < train.n(); ++i) {
    const Kappa k = kappa(train.d()(i), z(i), clipped_propensity(f(i), config.clip_epsilon));
    weights(i) = arm == 1 ? k.k1 : k.k0;
  }
  if (config.method == Method::reg_np) {
    const Stream s = arm == 1 ? Stream::larf1 : Stream::larf0;
    return fit_mlp(train.x(), train.y(), WeightedSquaredError{weights}, config.arch, stream_config(config, s));
  }
  return fit_least_squares(train.x(), train.y(), weights);
}

double robust_score(double beta, double f, double h, const Observation& w, double clip_epsilon) {
  const double g = clipped_propensity(f, clip_epsilon);
  const Kappa k = kappa(w.d, w.z, g);
  return (k.k1 - k.k0) * w.y - (g - w.z) / (g * (1.0 - g)) * h - beta;
}

double moment_score(double beta, double f, const Observation& w, double clip_epsilon) {
  const Kappa k = kappa(w.d, w.z, clipped_propensity(f, clip_epsilon));
  return (k.k1 - k.k0) * w.y - beta;
}

double regression_score(double beta, double f, double mu0, double mu1, const Observation& w, double clip_epsilon) {
  const Kappa k = kappa(w.d, w.z, clipped_propensity(f, clip_epsilon));
  return k.k1 * mu1 - k.k0 * mu0 - beta;
}

ScoreFamily robust_score_family(const FunctionEstimate& f_hat, const FunctionEstimate& h_hat, double clip_epsilon) {
  return ScoreFamily([f_hat, h_hat, clip_epsilon](double beta, const Observation& w) {
    return robust_score(beta, f_hat(w.x), h_hat(w.x), w, clip_epsilon);
  });
}

ScoreFamily moment_score_family(const FunctionEstimate& f_hat, double clip_epsilon) {
  return ScoreFamily([f_hat, clip_epsilon](double beta, const Observation& w) {
    return moment_score(beta, f_hat(w.x), w, clip_epsilon);
  });
}

ScoreFamily regression_score_family(const FunctionEstimate& f_hat, const FunctionEstimate& mu0_hat,
                                    const FunctionEstimate& mu1_hat, double clip_epsilon) {
  return ScoreFamily([f_hat, mu0_hat, mu1_hat, clip_epsilon](double beta, const Observation& w) {
    return regression_score(beta, f_hat(w.x), mu0_hat(w.x), mu1_hat(w.x), w, clip_epsilon);
  });
}

namespace {

// derivative in the log-odds of q(g) = (z − g) / (g(1 − g)) = κ¹ − κ⁰
double q_weight_slope(double g, double z) {
  const double odds = g / (1.0 - g);
  return -z / odds - (1.0 - z) * odds;
}

}  // namespace

DecoupledModel moment_as_decoupled(double eps) {
  DecoupledModel m;
  m.psi = [eps](double beta, double f, const Observation& w) { return moment_score(beta, f, w, eps); };
  m.d_f_psi = [eps](double, double f, const Observation& w) {
    return w.y * q_weight_slope(clipped_propensity(f, eps), w.z);
  };
  m.d_f_m1 = [eps](double f, const Observation& w) { return clipped_propensity(f, eps) - w.z; };
  m.d2_ff_m1 = [eps](double f, const Observation&) {
    const double g = clipped_propensity(f, eps);
    return g * (1.0 - g);
  };
  return m;
}

SequentialModel regression_as_sequential(double eps) {
  // κ⁰ = −(1 − d) q and κ¹ = d q.
  SequentialModel m;
  m.mu_dim = 2;
  m.psi = [eps](double beta, const Vector& mu, double f, const Observation& w) {
    return regression_score(beta, f, mu(0), mu(1), w, eps);
  };
  m.d_mu_psi = [eps](double, const Vector&, double f, const Observation& w) {
    const Kappa k = kappa(w.d, w.z, clipped_propensity(f, eps));
    return Vector{{-k.k0, k.k1}};
  };
  m.d_f_psi = [eps](double, const Vector& mu, double f, const Observation& w) {
    const double slope = q_weight_slope(clipped_propensity(f, eps), w.z);
    return w.d * slope * mu(1) + (1.0 - w.d) * slope * mu(0);
  };
  m.d_f_m1 = [eps](double f, const Observation& w) { return clipped_propensity(f, eps) - w.z; };
  m.d2_ff_m1 = [eps](double f, const Observation&) {
    const double g = clipped_propensity(f, eps);
    return g * (1.0 - g);
  };
  m.d_mu_m2 = [eps](const Vector& mu, double f, const Observation& w) {
    const Kappa k = kappa(w.d, w.z, clipped_propensity(f, eps));
    return Vector{{-2.0 * k.k0 * (w.y - mu(0)), -2.0 * k.k1 * (w.y - mu(1))}};
  };
  m.d2_mumu_m2 = [eps](const Vector&, double f, const Observation& w) {
    const Kappa k = kappa(w.d, w.z, clipped_propensity(f, eps));
    return Vector{{2.0 * k.k0, 2.0 * k.k1}};
  };
  m.d2_muf_m2 = [eps](const Vector& mu, double f, const Observation& w) {
    const double slope = q_weight_slope(clipped_propensity(f, eps), w.z);
    const double dk0 = -(1.0 - w.d) * slope;
    const double dk1 = w.d * slope;
    return Vector{{-2.0 * dk0 * (w.y - mu(0)), -2.0 * dk1 * (w.y - mu(1))}};
  };
  return m;
}

LateNuisance fit_nuisance(const Dataset& train, const LateConfig& config) {
  LateNuisance nu;
  nu.f_hat = estimate_log_odds(train, config);
  if (is_regression(config.method)) {
    nu.mu0_hat = fit_larf(train, nu.f_hat, 0, config);
    nu.mu1_hat = fit_larf(train, nu.f_hat, 1, config);
  } else if (!config.zero_correction) {
    nu.h_hat = estimate_h(train, nu.f_hat, config);
  }
  return nu;
}

ScoreFamily estimating_score(const LateNuisance& nu, const LateConfig& config) {
  switch (config.method) {
    case Method::robust_np:
    case Method::robust_lr:
      return robust_score_family(nu.f_hat, nu.h_hat, config.clip_epsilon);
    case Method::moment:
      return moment_score_family(nu.f_hat, config.clip_epsilon);
    case Method::reg_np:
    case Method::reg_lr:
      break;
  }
  if (!nu.mu0_hat || !nu.mu1_hat) throw std::logic_error("regression imputation requires fitted LARFs");
  return regression_score_family(nu.f_hat, *nu.mu0_hat, *nu.mu1_hat, config.clip_epsilon);
}

ScoreFamily variance_score(const LateNuisance& nu, const LateConfig& config) {
  if (is_regression(config.method)) return estimating_score(nu, config);
  return robust_score_family(nu.f_hat, nu.h_hat, config.clip_epsilon);
}

EstimationResult late_crossfit(const Dataset& data, const LateConfig& config) {
  config.validate();
  if (!data.has_instrument()) throw std::invalid_argument("late_crossfit requires an instrument column");
  const FoldSplit split = split_folds(static_cast<std::size_t>(data.n()), config.seed);
  const std::array<Dataset, 2> folds{data.subset(split.indices(0)), data.subset(split.indices(1))};

  std::array<double, 2> betas{};
  std::array<double, 2> variances{};
  for (int j = 0; j < 2; ++j) {
    const int k = 1 - j;
    try {
      LateConfig fold_config = config;
      fold_config.seed = mix_seed(config.seed, 100 + static_cast<std::uint64_t>(j));
      const LateNuisance nu = fit_nuisance(folds[j], fold_config);
      betas[k] = solve_beta_linear(estimating_score(nu, config), folds[k]);
      variances[k] = estimate_variance(variance_score(nu, config), betas[k], folds[k]);
    } catch (const std::exception& e) {
      throw std::runtime_error("fold " + std::to_string(j) + ": " + e.what());
    }
  }
  return combine_folds(std::string(method_label(config.method)), betas, variances,
                       static_cast<std::size_t>(data.n()), config.level);
}

}  // namespace orthoscore::late
