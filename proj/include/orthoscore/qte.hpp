#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/learners.hpp"
#include "orthoscore/ortho.hpp"

namespace orthoscore::qte {

enum class Learner { linear, mlp };

struct QteConfig {
  double tau = 0.5;
  double clip_epsilon = 0.01;
  Learner propensity = Learner::linear;  // logistic or MLP on log-odds
  Learner correction = Learner::linear;
  MlpArchitecture arch{};
  TrainConfig train{.weight_init_scale = 0.1, .validation_fraction = 0.2};
  double tol = 1e-8;
  std::uint64_t seed = 0;
  double level = 0.95;

  void validate() const;
};

/// d (1 + e^{−f}) (1{y ≤ β} − τ), with expit(f) clipped.
double ipw_score(double beta, double f, const Observation& w, double tau, double clip_epsilon);
/// ipw_score + (expit(f) − d) h
double orthogonal_score(double beta, double f, double h, const Observation& w, double tau, double clip_epsilon);

/// IPW score with m₁ the cross-entropy of d on log-odds f.
DecoupledModel ipw_as_decoupled(double tau, double clip_epsilon);

/// Root of the mean of d/g (1{y ≤ β} − τ) + (g − d) h over the given arrays,
/// bracketed by the outcome range.
double solve_quantile_equation(const Vector& y, const Vector& d, const Vector& g, const Vector& h, double tau,
                               double tol = 1e-8);

/// Gaussian-kernel density of Y(1) at `at`, from treated rows weighted by 1/g.
/// Silverman bandwidth on the treated outcomes.
double treated_density(const Vector& y, const Vector& d, const Vector& g, double at);

EstimationResult qte_crossfit(const Dataset& data, const QteConfig& config);

/// Synthetic design for the checks: x ~ N(0, I_2), D | x ~ Bernoulli(expit f₀(x)),
/// Y(1) = x₁ + e, e ~ N(0, 1), Y(0) ~ N(0, 1), Y = D Y(1) + (1 − D) Y(0).
struct GaussianDesign {
  double tau = 0.5;

  static double log_odds(RowRef x);  // f₀
  double quantile() const;           // β₀, the τ-quantile of N(0, 2)
  double correction(RowRef x) const;  // h₀ = (Φ(β₀ − x₁) − τ) / g₀(x)

  Dataset sample(std::size_t n, std::uint64_t seed) const;
};

}  // namespace orthoscore::qte
