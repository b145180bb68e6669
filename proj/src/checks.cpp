#include "orthoscore/checks.hpp"

#include "orthoscore/late.hpp"
#include "orthoscore/plr.hpp"
#include "orthoscore/qte.hpp"
#include "orthoscore/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace orthoscore::checks {

std::string_view target_label(Target t) {
  switch (t) {
    case Target::late: return "late";
    case Target::plr: return "plr";
    case Target::qte: return "qte";
  }
  return "?";
}

Target parse_target(std::string_view label) {
  if (label == "late") return Target::late;
  if (label == "plr") return Target::plr;
  if (label == "qte") return Target::qte;
  throw std::invalid_argument("unknown target '" + std::string(label) + "'");
}

bool CheckReport::passed(double multiple) const {
  return std::all_of(cases.begin(), cases.end(), [multiple](const CheckCase& c) {
    return c.orthogonal ? c.result.within(multiple) : !c.result.within(multiple);
  });
}

double CheckReport::weakest_control() const {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& c : cases)
    if (!c.orthogonal) out = std::min(out, c.ratio());
  return out;
}

namespace {

struct Score {
  std::string name;
  bool orthogonal;
  ScoreFactory factory;
  std::vector<FunctionEstimate> truth;
  std::vector<std::string> nuisance_names;
  bool all_directions = true;  // controls only use the constant direction
};

std::vector<std::pair<std::string, FunctionEstimate>> directions() {
  return {
      {"constant", FunctionEstimate::constant(1.0)},
      {"x1", FunctionEstimate::coordinate(0)},
      {"tanh(x1+x1*x2)", FunctionEstimate([](RowRef x) { return std::tanh(x(0) + x(0) * x(1)); })},
  };
}

FunctionEstimate fn(double (*f)(RowRef)) { return FunctionEstimate(FunctionEstimate::Pointwise(f)); }

CheckReport run_scores(Target target, const std::vector<Score>& scores, const Sampler& sampler, double beta0,
                       const OrthogonalityOptions& options) {
  CheckReport report;
  report.target = target;
  const auto dirs = directions();
  for (const Score& s : scores) {
    for (std::size_t which = 0; which < s.truth.size(); ++which) {
      const std::size_t count = s.all_directions ? dirs.size() : 1;
      for (std::size_t k = 0; k < count; ++k) {
        CheckCase c;
        c.score = s.name;
        c.nuisance = s.nuisance_names[which];
        c.direction = dirs[k].first;
        c.orthogonal = s.orthogonal;
        c.result = check_orthogonality(s.factory, s.truth, which, dirs[k].second, beta0, sampler, options);
        report.cases.push_back(std::move(c));
      }
    }
  }
  return report;
}

CheckReport late_suite(const OrthogonalityOptions& options) {
  constexpr double eps = 0.01;
  const auto scenario = sim::Scenario::s1;
  Sampler sampler = [scenario](std::size_t n, std::uint64_t seed) {
    return sim::gen_dataset({scenario, n, 4, seed}).data;
  };
  const FunctionEstimate f0 = fn(&sim::f0_true);
  const FunctionEstimate h0([scenario](RowRef x) { return sim::h0_true(x, scenario); });

  std::vector<Score> scores;
  scores.push_back({"robust",
                    true,
                    [](std::span<const FunctionEstimate> v) { return late::robust_score_family(v[0], v[1], eps); },
                    {f0, h0},
                    {"f", "h"}});
  scores.push_back({"moment",
                    false,
                    [](std::span<const FunctionEstimate> v) { return late::moment_score_family(v[0], eps); },
                    {f0},
                    {"f"},
                    false});
  return run_scores(Target::late, scores, sampler, sim::kTrueBeta, options);
}

CheckReport plr_suite(const OrthogonalityOptions& options) {
  const plr::GaussianDesign design;
  Sampler sampler = [design](std::size_t n, std::uint64_t seed) { return design.sample(n, seed); };
  const FunctionEstimate m0 = fn(&plr::GaussianDesign::propensity);
  const FunctionEstimate g0 = fn(&plr::GaussianDesign::baseline);
  const FunctionEstimate l0([design](RowRef x) { return design.outcome_mean(x); });
  const FunctionEstimate minus_m0([](RowRef x) { return -plr::GaussianDesign::propensity(x); });

  std::vector<Score> scores;
  scores.push_back({"partialling-out",
                    true,
                    [](std::span<const FunctionEstimate> v) { return plr::partialling_out_family(v[0], v[1]); },
                    {m0, l0},
                    {"m", "l"}});
  scores.push_back({"least-squares orthogonalised",
                    true,
                    [](std::span<const FunctionEstimate> v) {
                      return build_coupled_score(plr::least_squares_model(), v[0], v[1]);
                    },
                    {g0, minus_m0},
                    {"f", "h"}});
  scores.push_back({"least-squares",
                    false,
                    [](std::span<const FunctionEstimate> v) {
                      const FunctionEstimate g = v[0];
                      return ScoreFamily([g](double beta, const Observation& w) {
                        return w.d * (w.y - beta * w.d - g(w.x));
                      });
                    },
                    {g0},
                    {"f"},
                    false});
  return run_scores(Target::plr, scores, sampler, design.beta0, options);
}

CheckReport qte_suite(const OrthogonalityOptions& options) {
  constexpr double eps = 0.01;
  const qte::GaussianDesign design;
  const double tau = design.tau;
  Sampler sampler = [design](std::size_t n, std::uint64_t seed) { return design.sample(n, seed); };
  const FunctionEstimate f0 = fn(&qte::GaussianDesign::log_odds);
  const FunctionEstimate h0([design](RowRef x) { return design.correction(x); });

  std::vector<Score> scores;
  scores.push_back({"orthogonal",
                    true,
                    [tau](std::span<const FunctionEstimate> v) {
                      return build_decoupled_score(qte::ipw_as_decoupled(tau, eps), v[0], v[1]);
                    },
                    {f0, h0},
                    {"f", "h"}});
  scores.push_back({"ipw",
                    false,
                    [tau](std::span<const FunctionEstimate> v) {
                      const FunctionEstimate f = v[0];
                      return ScoreFamily([f, tau](double beta, const Observation& w) {
                        return qte::ipw_score(beta, f(w.x), w, tau, eps);
                      });
                    },
                    {f0},
                    {"f"},
                    false});
  return run_scores(Target::qte, scores, sampler, design.quantile(), options);
}

}  // namespace

CheckReport run_suite(Target target, const OrthogonalityOptions& options) {
  switch (target) {
    case Target::late: return late_suite(options);
    case Target::plr: return plr_suite(options);
    case Target::qte: return qte_suite(options);
  }
  throw std::invalid_argument("unknown target");
}

}  // namespace orthoscore::checks
