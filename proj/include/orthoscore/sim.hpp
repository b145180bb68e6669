#pragma once

#include "orthoscore/core.hpp"
#include "orthoscore/late.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace orthoscore::sim {

enum class Scenario { s1, s2 };

std::string_view scenario_label(Scenario s);
Scenario parse_scenario(std::string_view label);

inline constexpr double kTrueBeta = 1.8;

struct DgpConfig {
  Scenario scenario = Scenario::s1;
  std::size_t n = 2000;
  std::size_t p = 4;  // columns beyond the fourth are pure noise
  std::uint64_t seed = 0;

  void validate() const;
};

/// Standard normal entries, each redrawn until it lands in [−1, 1].
CovariateMatrix gen_covariates(std::size_t n, std::size_t p, Rng& rng);

double f0_true(RowRef x);
double g0_true(RowRef x);
/// Complier outcome mean under treatment t.
double mu_true(RowRef x, int t, Scenario scenario);
double always_taker_mean(RowRef x);  // D = 1
double never_taker_mean(RowRef x);   // D = 0
/// E[Y | X = x, Z = z].
double outcome_mean(RowRef x, int z, Scenario scenario);
/// Orthogonal direction of the robust score at the truth, −(1 − g) E[Y|x,1] − g E[Y|x,0].
double h0_true(RowRef x, Scenario scenario);

enum class Stratum { always_taker = 1, complier = 2, never_taker = 3 };

struct Draw {
  Dataset data;
  std::vector<Stratum> strata;
  double beta0 = kTrueBeta;
};

Draw gen_dataset(const DgpConfig& config);

struct ReplicateResult {
  std::size_t replicate = 0;
  late::Method method = late::Method::robust_lr;
  bool ok = false;
  double beta_hat = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string error;
};

struct MethodSummary {
  late::Method method = late::Method::robust_lr;
  double bias = 0.0;
  double smse = 0.0;
  double coverage = 0.0;
  double mean_beta = 0.0;
  std::size_t reps = 0;  // successful replicates
  std::size_t failures = 0;

  double failure_rate() const;
};

/// Bias |mean(β̂ − β₀)|, SMSE (√n / r) Σ(β̂ − β₀)², coverage of β₀, over the
/// successful results for `method`. Results are sorted by replicate index first.
MethodSummary summarize(late::Method method, std::span<const ReplicateResult> results, std::size_t n,
                        double beta0 = kTrueBeta);

struct SimulationOptions {
  std::vector<late::Method> methods{late::Method::robust_lr};
  std::size_t reps = 1;
  std::uint64_t master_seed = 0;
  std::size_t jobs = 1;
  late::LateConfig base{};  // method and seed are overwritten per fit
};

struct SimulationReport {
  DgpConfig dgp;
  std::size_t reps_requested = 0;
  std::uint64_t master_seed = 0;
  std::vector<MethodSummary> methods;
  std::vector<ReplicateResult> results;  // ordered by (replicate, method)
};

SimulationReport run_replications(DgpConfig dgp, const SimulationOptions& options);

}  // namespace orthoscore::sim
