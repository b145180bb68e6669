#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/learners.hpp"
#include "orthoscore/ortho.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace orthoscore::late {

enum class Method { robust_np, robust_lr, moment, reg_np, reg_lr };

/// Lower-case labels: r-np, r-lr, m, reg-np, reg-lr.
std::string_view method_label(Method m);
Method parse_method(std::string_view label);

enum class PropensityLearner {
  automatic,  // MLP for the -np methods, affine logistic otherwise
  logistic,
  mlp,
};

struct LateConfig {
  double clip_epsilon = 0.01;
  Method method = Method::robust_lr;
  PropensityLearner propensity = PropensityLearner::automatic;
  MlpArchitecture arch{};
  /// He initialisation at full scale leaves a rough random log-odds surface that
  /// a few hundred Adam steps do not remove; nuisance nets start near constant.
  TrainConfig train{.weight_init_scale = 0.1};
  /// Early-stopping holdout for the R-NP propensity and correction networks.
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  double level = 0.95;
  /// Diagnostic: replace ĥ by 0 in the robust score.
  bool zero_correction = false;

  void validate() const;
  bool uses_mlp_propensity() const;
};

struct Kappa {
  double k0;
  double k1;
};

/// Complier weights for one observation; requires 0 < g < 1.
Kappa kappa(double d, double z, double g);

double expit(double f);
double clip_probability(double g, double epsilon);
/// expit(f) clipped to [ε, 1 − ε].
double clipped_propensity(double f, double epsilon);

struct LateNuisance {
  FunctionEstimate f_hat = FunctionEstimate::zero();
  FunctionEstimate h_hat = FunctionEstimate::zero();
  std::optional<FunctionEstimate> mu0_hat;
  std::optional<FunctionEstimate> mu1_hat;
};

/// Log-odds of the instrument given covariates.
FunctionEstimate estimate_log_odds(const Dataset& train, const LateConfig& config);

/// Pseudo-outcome y·((e^{2f} − 1)/e^f · z − e^f) at the clipped log-odds.
Vector h_pseudo_outcome(const Dataset& train, const FunctionEstimate& f_hat, double clip_epsilon);

/// Regresses the pseudo-outcome on x (MLP for r-np, linear otherwise).
FunctionEstimate estimate_h(const Dataset& train, const FunctionEstimate& f_hat, const LateConfig& config);

/// κ-weighted least squares for the local average response function of arm t.
FunctionEstimate fit_larf(const Dataset& train, const FunctionEstimate& f_hat, int arm, const LateConfig& config);

/// (κ¹ − κ⁰) y − ((g − z) / (g(1 − g))) ĥ(x) − β
double robust_score(double beta, double f, double h, const Observation& w, double clip_epsilon);
/// (κ¹ − κ⁰) y − β
double moment_score(double beta, double f, const Observation& w, double clip_epsilon);
/// κ¹ μ̂¹(x) − κ⁰ μ̂⁰(x) − β
double regression_score(double beta, double f, double mu0, double mu1, const Observation& w,
                        double clip_epsilon);

ScoreFamily robust_score_family(const FunctionEstimate& f_hat, const FunctionEstimate& h_hat, double clip_epsilon);
ScoreFamily moment_score_family(const FunctionEstimate& f_hat, double clip_epsilon);
ScoreFamily regression_score_family(const FunctionEstimate& f_hat, const FunctionEstimate& mu0_hat,
                                    const FunctionEstimate& mu1_hat, double clip_epsilon);

/// The moment score written as a decoupled model (cross-entropy m₁), whose
/// orthogonalised form coincides with the robust score.
DecoupledModel moment_as_decoupled(double clip_epsilon);

/// The regression-imputation score as a sequential model with μ = (μ⁰, μ¹)
/// and m₂ the κ-weighted squared error.
SequentialModel regression_as_sequential(double clip_epsilon);

/// Nuisances for `config.method` fitted on one fold.
LateNuisance fit_nuisance(const Dataset& train, const LateConfig& config);

/// Score used to solve for β under `config.method`.
ScoreFamily estimating_score(const LateNuisance& nuisance, const LateConfig& config);
/// Score whose mean square estimates the asymptotic variance.
ScoreFamily variance_score(const LateNuisance& nuisance, const LateConfig& config);

/// Two-fold cross-fitted estimator of β₀ = E[(Y(1) − Y(0)) 1{complier}].
EstimationResult late_crossfit(const Dataset& data, const LateConfig& config);

}  // namespace orthoscore::late
