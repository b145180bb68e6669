#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/learners.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace orthoscore {

/// How the estimating equation Σ ψ(β; w) = 0 is solved for β.
enum class SolveKind {
  linear,    // ψ affine in β
  monotone,  // mean score non-decreasing in β (possibly a step function)
};

/// Per-observation score ψ(β; w) with fitted nuisances already bound.
class ScoreFamily {
 public:
  using Evaluator = std::function<double(double beta, const Observation& w)>;

  ScoreFamily(Evaluator psi, SolveKind kind = SolveKind::linear) : psi_(std::move(psi)), kind_(kind) {}

  double operator()(double beta, const Observation& w) const { return psi_(beta, w); }
  SolveKind solve_kind() const { return kind_; }

  Vector evaluate(double beta, const Dataset& data) const;
  double mean(double beta, const Dataset& data) const;

 private:
  Evaluator psi_;
  SolveKind kind_;
};

/// Root of an affine score over `fold`: β̂ = −Σ A / Σ B for ψ = A + Bβ.
/// For the common ψ = A − β this is the fold mean of A.
double solve_beta_linear(const ScoreFamily& score, const Dataset& fold);

struct Bracket {
  double lo;
  double hi;
};

/// Bisection for a non-decreasing function. The bracket is widened by doubling
/// (up to 60 times) until the sign changes. Returns the midpoint of the final
/// bracket, which is a generalised root for step functions: the infimum of
/// {β : score(β) ≥ 0} to within `tol`.
double solve_monotone(const std::function<double(double)>& score, Bracket bracket, double tol = 1e-8);

/// Solves the empirical estimating equation on `fold` according to the
/// score's declared kind. `bracket` is only used for monotone scores.
double solve_score(const ScoreFamily& score, const Dataset& fold, Bracket bracket, double tol = 1e-8);

/// Mean of squared scores at `beta_hat` over `fold`.
double estimate_variance(const ScoreFamily& score, double beta_hat, const Dataset& fold);

// ---------------------------------------------------------------------------
// Criterion models. Nuisances enter only through their value at the row's x,
// so every callback receives that value as a scalar.

using CoupledTerm = std::function<double(double beta, double f, const Observation& w)>;
using NuisanceTerm = std::function<double(double f, const Observation& w)>;

/// (β₀, f₀) jointly minimise P m(β, f; W).
struct CoupledModel {
  CoupledTerm d_beta_m;
  CoupledTerm d_f_m;
  CoupledTerm d2_beta_f_m;
  CoupledTerm d2_ff_m;
  SolveKind solve = SolveKind::linear;
};

/// P ψ(β₀, f₀; W) = 0 with f₀ = argmin P m₁(f; W).
struct DecoupledModel {
  CoupledTerm psi;
  CoupledTerm d_f_psi;
  NuisanceTerm d_f_m1;
  NuisanceTerm d2_ff_m1;
  SolveKind solve = SolveKind::linear;
};

/// P ψ(β₀, μ₀, f₀; W) = 0 with f₀ = argmin P m₁(f) and μ₀ = argmin P m₂(μ, f₀).
/// μ may be vector valued (one function per component); m₂ must then be
/// separable across components so its μ-Hessian is diagonal.
struct SequentialModel {
  using ScalarTerm = std::function<double(double beta, const Vector& mu, double f, const Observation& w)>;
  using VectorTerm = std::function<Vector(double beta, const Vector& mu, double f, const Observation& w)>;
  using StageTwoTerm = std::function<Vector(const Vector& mu, double f, const Observation& w)>;

  std::size_t mu_dim = 1;
  ScalarTerm psi;
  VectorTerm d_mu_psi;
  ScalarTerm d_f_psi;
  NuisanceTerm d_f_m1;
  NuisanceTerm d2_ff_m1;
  StageTwoTerm d_mu_m2;
  StageTwoTerm d2_mumu_m2;  // diagonal of the μ-Hessian
  StageTwoTerm d2_muf_m2;
  SolveKind solve = SolveKind::linear;
};

/// Denominators of the direction ratios are clipped to this magnitude.
inline constexpr double kDirectionDenominatorFloor = 1e-3;

struct DirectionEstimate {
  FunctionEstimate h = FunctionEstimate::zero();
  /// Training rows where the denominator clip was active.
  std::size_t clipped = 0;
};

struct SequentialDirections {
  FunctionEstimate h1 = FunctionEstimate::zero();
  std::vector<FunctionEstimate> h2;
  FunctionEstimate h3 = FunctionEstimate::zero();
  std::size_t clipped = 0;
};

/// x ↦ −num(x) / den(x) with |den| floored at kDirectionDenominatorFloor.
DirectionEstimate ratio_direction(const CovariateMatrix& x, const Vector& numerator_target,
                                  const Vector& denominator_target, const Regressor& regressor);

DirectionEstimate fit_coupled_direction(const CoupledModel& model, double beta_pilot, const FunctionEstimate& f_hat,
                                        const Dataset& data, const Regressor& regressor);

/// ψ*(β; w) = ∂_β m(β, f̂; w) + ∂_f m(β, f̂; w) ĥ(x)
ScoreFamily build_coupled_score(const CoupledModel& model, const FunctionEstimate& f_hat,
                                const FunctionEstimate& h_hat);

DirectionEstimate fit_decoupled_direction(const DecoupledModel& model, double beta_pilot,
                                          const FunctionEstimate& f_hat, const Dataset& data,
                                          const Regressor& regressor);

/// ψ*(β; w) = ψ(β, f̂; w) + ∂_f m₁(f̂; w) ĥ(x)
ScoreFamily build_decoupled_score(const DecoupledModel& model, const FunctionEstimate& f_hat,
                                  const FunctionEstimate& h_hat);

/// Fits ĥ₁ and ĥ₂ from ratios of regressions, then ĥ₃ from the ĥ₂-weighted
/// cross derivative. Nuisances must already be fitted in the order f̂ → μ̂.
SequentialDirections fit_sequential_directions(const SequentialModel& model, double beta_pilot,
                                               std::span<const FunctionEstimate> mu_hat,
                                               const FunctionEstimate& f_hat, const Dataset& data,
                                               const Regressor& regressor);

/// ψ* = ψ + ∂_f m₁ (ĥ₁ + ĥ₃) + Σ_k ∂_{μ_k} m₂ ĥ₂ₖ
ScoreFamily build_sequential_score(const SequentialModel& model, std::span<const FunctionEstimate> mu_hat,
                                   const FunctionEstimate& f_hat, const SequentialDirections& directions);

// ---------------------------------------------------------------------------
// Finite-difference Gateaux derivative of the mean score.

using ScoreFactory = std::function<ScoreFamily(std::span<const FunctionEstimate> nuisances)>;
using Sampler = std::function<Dataset(std::size_t n, std::uint64_t seed)>;

struct OrthogonalityOptions {
  double epsilon = 1e-3;
  std::size_t n_mc = 1'000'000;
  std::uint64_t seed = 0;
  std::size_t shards = 16;
  std::size_t jobs = 1;
};

struct OrthogonalityCheck {
  double derivative = 0.0;
  double std_error = 0.0;

  bool within(double multiple) const { return std::abs(derivative) <= multiple * std_error; }
};

/// Central difference of mean ψ*(β₀) along nuisances[which] ± ε·direction,
/// with common random numbers. Draws are split into shards with derived seeds
/// and reduced in shard order, so the result does not depend on `jobs`.
OrthogonalityCheck check_orthogonality(const ScoreFactory& make_score, std::span<const FunctionEstimate> truth,
                                       std::size_t which, const FunctionEstimate& direction, double beta0,
                                       const Sampler& sampler, const OrthogonalityOptions& options);

}  // namespace orthoscore
