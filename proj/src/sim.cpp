#include "orthoscore/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace orthoscore::sim {

std::string_view scenario_label(Scenario s) { return s == Scenario::s1 ? "s1" : "s2"; }

Scenario parse_scenario(std::string_view label) {
  if (label == "s1" || label == "S1") return Scenario::s1;
  if (label == "s2" || label == "S2") return Scenario::s2;
  throw std::invalid_argument("unknown scenario '" + std::string(label) + "'");
}

void DgpConfig::validate() const {
  if (p < 4) throw std::invalid_argument("p must be at least 4");
  if (n < 1) throw std::invalid_argument("n must be positive");
}

CovariateMatrix gen_covariates(std::size_t n, std::size_t p, Rng& rng) {
  if (p < 1) throw std::invalid_argument("p must be positive");
  std::normal_distribution<double> normal(0.0, 1.0);
  CovariateMatrix x(static_cast<Index>(n), static_cast<Index>(p));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      double v = normal(rng);
      while (v < -1.0 || v > 1.0) v = normal(rng);
      x(i, j) = v;
    }
  }
  return x;
}

double f0_true(RowRef x) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3);
  return x1 * x1 * x2 * x2 * x2 + std::log(x2 * x3 + 4.0) - std::exp(x3 * x4 / 2.0) - 0.5;
}

double g0_true(RowRef x) { return 1.0 / (1.0 + std::exp(-f0_true(x))); }

double mu_true(RowRef x, int t, Scenario scenario) {
  const double x1 = x(0), x2 = x(1), x3 = x(2), x4 = x(3);
  constexpr double pi = std::numbers::pi;
  if (scenario == Scenario::s1) {
    return std::cos(pi * x1 * x2) + x1 * x2 * x3 * x3 * x3 + std::exp(x2 * x3 - 1.0) + std::log(3.0 + x3 * x4) +
           3.0 * t;
  }
  return std::sin(pi * x1 * x2 / 2.0) + std::log(x2 * x3 + 1.5) + std::exp(x3 * x4 / 2.0) + 3.0 * t;
}

double always_taker_mean(RowRef x) { return x(0) + x(1) + x(2) + x(3) + 2.0; }

double never_taker_mean(RowRef x) { return 0.6 * x(0) + 0.8 * x(1) + x(2) + 1.2 * x(3); }

double outcome_mean(RowRef x, int z, Scenario scenario) {
  return 0.2 * always_taker_mean(x) + 0.6 * mu_true(x, z, scenario) + 0.2 * never_taker_mean(x);
}

double h0_true(RowRef x, Scenario scenario) {
  const double g = g0_true(x);
  return -(1.0 - g) * outcome_mean(x, 1, scenario) - g * outcome_mean(x, 0, scenario);
}

Draw gen_dataset(const DgpConfig& config) {
  config.validate();
  Rng rng(config.seed);
  CovariateMatrix x = gen_covariates(config.n, config.p, rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto n = static_cast<Index>(config.n);
  Vector y(n), d(n), z(n);
  std::vector<Stratum> strata(config.n);
  for (Index i = 0; i < n; ++i) {
    const auto row = x.row(i);
    z(i) = unif(rng) < g0_true(row) ? 1.0 : 0.0;
    const double u = unif(rng);
    const Stratum s = u < 0.2 ? Stratum::always_taker : (u < 0.8 ? Stratum::complier : Stratum::never_taker);
    strata[static_cast<std::size_t>(i)] = s;
    const double eps = normal(rng);
    switch (s) {
      case Stratum::always_taker:
        d(i) = 1.0;
        y(i) = always_taker_mean(row) + eps;
        break;
      case Stratum::complier:
        d(i) = z(i);
        y(i) = mu_true(row, static_cast<int>(d(i)), config.scenario) + eps;
        break;
      case Stratum::never_taker:
        d(i) = 0.0;
        y(i) = never_taker_mean(row) - 2.0 * d(i) + eps;
        break;
    }
  }
  return Draw{Dataset(std::move(x), std::move(y), std::move(d), std::move(z)), std::move(strata), kTrueBeta};
}

double MethodSummary::failure_rate() const {
  const std::size_t total = reps + failures;
  return total == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(total);
}

MethodSummary summarize(late::Method method, std::span<const ReplicateResult> results, std::size_t n,
                        double beta0) {
  std::vector<ReplicateResult> mine;
  for (const auto& r : results)
    if (r.method == method) mine.push_back(r);
  std::sort(mine.begin(), mine.end(),
            [](const ReplicateResult& a, const ReplicateResult& b) { return a.replicate < b.replicate; });

  MethodSummary s;
  s.method = method;
  double sum_err = 0.0;
  double sum_sq = 0.0;
  std::size_t covered = 0;
  for (const auto& r : mine) {
    if (!r.ok) {
      ++s.failures;
      continue;
    }
    ++s.reps;
    const double e = r.beta_hat - beta0;
    sum_err += e;
    sum_sq += e * e;
    if (r.ci_low <= beta0 && beta0 <= r.ci_high) ++covered;
  }
  if (s.reps > 0) {
    const auto r = static_cast<double>(s.reps);
    s.bias = std::abs(sum_err / r);
    s.mean_beta = beta0 + sum_err / r;
    s.smse = std::sqrt(static_cast<double>(n)) / r * sum_sq;
    s.coverage = static_cast<double>(covered) / r;
  }
  return s;
}

SimulationReport run_replications(DgpConfig dgp, const SimulationOptions& options) {
  dgp.validate();
  if (options.reps < 1) throw std::invalid_argument("reps must be at least 1");
  if (options.methods.empty()) throw std::invalid_argument("no methods requested");
  options.base.validate();

  auto replicate = [&](std::size_t j) {
    const std::uint64_t rep_seed = mix_seed(options.master_seed, j);
    DgpConfig cfg = dgp;
    cfg.seed = rep_seed;
    std::vector<ReplicateResult> out;
    out.reserve(options.methods.size());
    std::optional<Draw> draw;
    std::string draw_error;
    try {
      draw.emplace(gen_dataset(cfg));
    } catch (const std::exception& e) {
      draw_error = e.what();
    }
    for (late::Method m : options.methods) {
      ReplicateResult r;
      r.replicate = j;
      r.method = m;
      if (!draw) {
        r.error = draw_error;
        out.push_back(std::move(r));
        continue;
      }
      late::LateConfig lc = options.base;
      lc.method = m;
      lc.seed = mix_seed(rep_seed, 1);
      try {
        const EstimationResult est = late::late_crossfit(draw->data, lc);
        r.ok = std::isfinite(est.beta_hat) && std::isfinite(est.std_err);
        r.beta_hat = est.beta_hat;
        r.std_err = est.std_err;
        r.ci_low = est.ci_low;
        r.ci_high = est.ci_high;
        if (!r.ok) r.error = "non-finite estimate";
      } catch (const std::exception& e) {
        r.error = e.what();
      }
      out.push_back(std::move(r));
    }
    return out;
  };

  const auto per_rep = parallel_map(options.reps, std::max<std::size_t>(options.jobs, 1), replicate);

  SimulationReport report;
  report.dgp = dgp;
  report.reps_requested = options.reps;
  report.master_seed = options.master_seed;
  for (const auto& v : per_rep) report.results.insert(report.results.end(), v.begin(), v.end());
  for (late::Method m : options.methods) report.methods.push_back(summarize(m, report.results, dgp.n));
  return report;
}

}  // namespace orthoscore::sim
