#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/learners.hpp"
#include "orthoscore/ortho.hpp"

namespace orthoscore::plr {

enum class Learner { linear, mlp };

struct PlrConfig {
  Learner learner = Learner::linear;
  MlpArchitecture arch{};
  TrainConfig train{.weight_init_scale = 0.1, .validation_fraction = 0.2};
  std::uint64_t seed = 0;
  double level = 0.95;
};

/// Partialling-out score (d − m(x)) ((y − ℓ(x)) − β (d − m(x))).
double partialling_out_score(double beta, double m, double l, const Observation& w);
ScoreFamily partialling_out_family(const FunctionEstimate& m_hat, const FunctionEstimate& l_hat);

struct FoldSolution {
  double beta;
  double sigma2;
};

/// Closed-form root Σ(d − m̂)(y − ℓ̂) / Σ(d − m̂)² and the sandwich variance
/// mean(ψ²) / mean((d − m̂)²)², all on the evaluation fold.
FoldSolution solve_fold(const Vector& d, const Vector& y, const Vector& m_hat, const Vector& l_hat);

/// m(β, f; w) = (βd + f(x) − y)² as a coupled criterion; its orthogonal
/// direction is −E[D | X].
CoupledModel least_squares_model();

EstimationResult plr_crossfit(const Dataset& data, const PlrConfig& config);

/// Synthetic partially linear design used by the orthogonality checks:
/// x ~ N(0, I_3), D | x ~ Bernoulli(m₀(x)), Y = β₀ D + g₀(x) + ε.
struct GaussianDesign {
  double beta0 = 1.0;

  static double propensity(RowRef x);  // m₀
  static double baseline(RowRef x);    // g₀
  double outcome_mean(RowRef x) const { return beta0 * propensity(x) + baseline(x); }  // ℓ₀

  Dataset sample(std::size_t n, std::uint64_t seed) const;
};

}  // namespace orthoscore::plr
