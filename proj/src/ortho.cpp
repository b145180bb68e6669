#include "orthoscore/ortho.hpp"

#include <algorithm>
#include <stdexcept>

namespace orthoscore {

Vector ScoreFamily::evaluate(double beta, const Dataset& data) const {
  Vector out(data.n());
  for (Index i = 0; i < data.n(); ++i) out(i) = psi_(beta, data.observation(i));
  return out;
}

double ScoreFamily::mean(double beta, const Dataset& data) const {
  if (data.n() == 0) throw std::invalid_argument("empty fold");
  return evaluate(beta, data).mean();
}

double solve_beta_linear(const ScoreFamily& score, const Dataset& fold) {
  if (fold.n() == 0) throw std::invalid_argument("empty fold");
  double intercept = 0.0;
  double slope = 0.0;
  for (Index i = 0; i < fold.n(); ++i) {
    const Observation w = fold.observation(i);
    const double at_zero = score(0.0, w);
    intercept += at_zero;
    slope += score(1.0, w) - at_zero;
  }
  if (slope == 0.0 || !std::isfinite(slope)) throw std::runtime_error("score does not depend on beta");
  double beta = -intercept / slope;
  // One Newton correction removes the rounding left by the two-point slope.
  beta -= score.evaluate(beta, fold).sum() / slope;
  return beta;
}

double solve_monotone(const std::function<double(double)>& score, Bracket bracket, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("bisection tolerance must be positive");
  double lo = std::min(bracket.lo, bracket.hi);
  double hi = std::max(bracket.lo, bracket.hi);
  double width = std::max(hi - lo, 1.0);

  for (int expansions = 0;; ++expansions) {
    const bool low_ok = score(lo) < 0.0;
    const bool high_ok = score(hi) >= 0.0;
    if (low_ok && high_ok) break;
    if (expansions == 60) throw std::runtime_error("root not bracketed");
    if (!low_ok) lo -= width;
    if (!high_ok) hi += width;
    width *= 2.0;
  }

  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (score(mid) < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double solve_score(const ScoreFamily& score, const Dataset& fold, Bracket bracket, double tol) {
  if (score.solve_kind() == SolveKind::linear) return solve_beta_linear(score, fold);
  return solve_monotone([&](double beta) { return score.mean(beta, fold); }, bracket, tol);
}

double estimate_variance(const ScoreFamily& score, double beta_hat, const Dataset& fold) {
  if (fold.n() == 0) throw std::invalid_argument("empty fold");
  return score.evaluate(beta_hat, fold).squaredNorm() / static_cast<double>(fold.n());
}

namespace {

double floor_magnitude(double v) {
  if (std::abs(v) >= kDirectionDenominatorFloor) return v;
  return v < 0.0 ? -kDirectionDenominatorFloor : kDirectionDenominatorFloor;
}

class RatioModel final : public FunctionModel {
 public:
  RatioModel(FunctionEstimate num, FunctionEstimate den) : num_(std::move(num)), den_(std::move(den)) {}
  double evaluate(RowRef x) const override { return -num_(x) / floor_magnitude(den_(x)); }
  Vector evaluate_batch(const CovariateMatrix& x) const override {
    Vector num = num_(x);
    const Vector den = den_(x);
    for (Index i = 0; i < num.size(); ++i) num(i) = -num(i) / floor_magnitude(den(i));
    return num;
  }

 private:
  FunctionEstimate num_;
  FunctionEstimate den_;
};

// Constant pseudo-outcomes are returned exactly instead of being regressed.
FunctionEstimate fit_target(const CovariateMatrix& x, const Vector& target, const Regressor& regressor) {
  if (target.size() > 0 && (target.array() == target(0)).all()) return FunctionEstimate::constant(target(0));
  return regressor(x, target);
}

struct Denominator {
  FunctionEstimate fit;
  std::size_t clipped;
};

Denominator fit_denominator(const CovariateMatrix& x, const Vector& target, const Regressor& regressor) {
  if ((target.array() == 0.0).all()) throw std::runtime_error("direction undefined");
  FunctionEstimate fit = fit_target(x, target, regressor);
  const Vector fitted = fit(x);
  const auto clipped = static_cast<std::size_t>((fitted.array().abs() < kDirectionDenominatorFloor).count());
  return {std::move(fit), clipped};
}

FunctionEstimate ratio_of(const CovariateMatrix& x, const Vector& numerator_target, const FunctionEstimate& den,
                          const Regressor& regressor) {
  if ((numerator_target.array() == 0.0).all()) return FunctionEstimate::zero();
  return FunctionEstimate(std::make_shared<RatioModel>(fit_target(x, numerator_target, regressor), den));
}

Matrix evaluate_all(std::span<const FunctionEstimate> fs, const CovariateMatrix& x) {
  Matrix out(x.rows(), static_cast<Index>(fs.size()));
  for (std::size_t k = 0; k < fs.size(); ++k) out.col(static_cast<Index>(k)) = fs[k](x);
  return out;
}

Vector evaluate_at(std::span<const FunctionEstimate> fs, RowRef x) {
  Vector out(static_cast<Index>(fs.size()));
  for (std::size_t k = 0; k < fs.size(); ++k) out(static_cast<Index>(k)) = fs[k](x);
  return out;
}

}  // namespace

DirectionEstimate ratio_direction(const CovariateMatrix& x, const Vector& numerator_target,
                                  const Vector& denominator_target, const Regressor& regressor) {
  if (numerator_target.size() != x.rows() || denominator_target.size() != x.rows())
    throw std::invalid_argument("pseudo-outcomes and covariates differ in length");
  Denominator den = fit_denominator(x, denominator_target, regressor);
  return {ratio_of(x, numerator_target, den.fit, regressor), den.clipped};
}

DirectionEstimate fit_coupled_direction(const CoupledModel& model, double beta_pilot, const FunctionEstimate& f_hat,
                                        const Dataset& data, const Regressor& regressor) {
  const Vector f = f_hat(data.x());
  Vector num(data.n()), den(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const Observation w = data.observation(i);
    num(i) = model.d2_beta_f_m(beta_pilot, f(i), w);
    den(i) = model.d2_ff_m(beta_pilot, f(i), w);
  }
  return ratio_direction(data.x(), num, den, regressor);
}

ScoreFamily build_coupled_score(const CoupledModel& model, const FunctionEstimate& f_hat,
                                const FunctionEstimate& h_hat) {
  return ScoreFamily(
      [model, f_hat, h_hat](double beta, const Observation& w) {
        const double f = f_hat(w.x);
        return model.d_beta_m(beta, f, w) + model.d_f_m(beta, f, w) * h_hat(w.x);
      },
      model.solve);
}

DirectionEstimate fit_decoupled_direction(const DecoupledModel& model, double beta_pilot,
                                          const FunctionEstimate& f_hat, const Dataset& data,
                                          const Regressor& regressor) {
  const Vector f = f_hat(data.x());
  Vector num(data.n()), den(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    const Observation w = data.observation(i);
    num(i) = model.d_f_psi(beta_pilot, f(i), w);
    den(i) = model.d2_ff_m1(f(i), w);
  }
  return ratio_direction(data.x(), num, den, regressor);
}

ScoreFamily build_decoupled_score(const DecoupledModel& model, const FunctionEstimate& f_hat,
                                  const FunctionEstimate& h_hat) {
  return ScoreFamily(
      [model, f_hat, h_hat](double beta, const Observation& w) {
        const double f = f_hat(w.x);
        return model.psi(beta, f, w) + model.d_f_m1(f, w) * h_hat(w.x);
      },
      model.solve);
}

SequentialDirections fit_sequential_directions(const SequentialModel& model, double beta_pilot,
                                               std::span<const FunctionEstimate> mu_hat,
                                               const FunctionEstimate& f_hat, const Dataset& data,
                                               const Regressor& regressor) {
  const auto k_dim = static_cast<Index>(model.mu_dim);
  if (mu_hat.size() != model.mu_dim) throw std::invalid_argument("mu_hat size does not match the model");
  const Index n = data.n();
  const CovariateMatrix& x = data.x();
  const Vector f = f_hat(x);
  const Matrix mu = evaluate_all(mu_hat, x);

  Vector num1(n), den1(n);
  Matrix num2(n, k_dim), den2(n, k_dim), cross(n, k_dim);
  for (Index i = 0; i < n; ++i) {
    const Observation w = data.observation(i);
    const Vector mu_i = mu.row(i).transpose();
    num1(i) = model.d_f_psi(beta_pilot, mu_i, f(i), w);
    den1(i) = model.d2_ff_m1(f(i), w);
    num2.row(i) = model.d_mu_psi(beta_pilot, mu_i, f(i), w).transpose();
    den2.row(i) = model.d2_mumu_m2(mu_i, f(i), w).transpose();
    cross.row(i) = model.d2_muf_m2(mu_i, f(i), w).transpose();
  }

  SequentialDirections out;
  Denominator stage_one = fit_denominator(x, den1, regressor);
  out.clipped += stage_one.clipped;
  out.h1 = ratio_of(x, num1, stage_one.fit, regressor);

  Vector num3 = Vector::Zero(n);
  for (Index k = 0; k < k_dim; ++k) {
    Denominator stage_two = fit_denominator(x, den2.col(k), regressor);
    out.clipped += stage_two.clipped;
    out.h2.push_back(ratio_of(x, num2.col(k), stage_two.fit, regressor));
    num3 += cross.col(k).cwiseProduct(out.h2.back()(x));
  }
  out.h3 = ratio_of(x, num3, stage_one.fit, regressor);
  // ĥ₃ shares ĥ₁'s denominator; its clip count is already included.
  return out;
}

ScoreFamily build_sequential_score(const SequentialModel& model, std::span<const FunctionEstimate> mu_hat,
                                   const FunctionEstimate& f_hat, const SequentialDirections& directions) {
  if (mu_hat.size() != model.mu_dim || directions.h2.size() != model.mu_dim)
    throw std::invalid_argument("sequential score: nuisance dimensions do not match the model");
  std::vector<FunctionEstimate> mu(mu_hat.begin(), mu_hat.end());
  return ScoreFamily(
      [model, mu, f_hat, directions](double beta, const Observation& w) {
        const double f = f_hat(w.x);
        const Vector mu_x = evaluate_at(mu, w.x);
        const Vector h2 = evaluate_at(directions.h2, w.x);
        return model.psi(beta, mu_x, f, w) +
               model.d_f_m1(f, w) * (directions.h1(w.x) + directions.h3(w.x)) +
               model.d_mu_m2(mu_x, f, w).dot(h2);
      },
      model.solve);
}

namespace {

struct Moments {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void push(double v) {
    count += 1.0;
    const double delta = v - mean;
    mean += delta / count;
    m2 += delta * (v - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    const double delta = o.mean - mean;
    mean += delta * o.count / total;
    m2 += o.m2 + delta * delta * count * o.count / total;
    count = total;
  }
};

}  // namespace

OrthogonalityCheck check_orthogonality(const ScoreFactory& make_score, std::span<const FunctionEstimate> truth,
                                       std::size_t which, const FunctionEstimate& direction, double beta0,
                                       const Sampler& sampler, const OrthogonalityOptions& options) {
  if (!(options.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (options.n_mc < 2) throw std::invalid_argument("n_mc must be at least 2");
  if (which >= truth.size()) throw std::invalid_argument("nuisance index out of range");

  std::vector<FunctionEstimate> up(truth.begin(), truth.end());
  std::vector<FunctionEstimate> down(truth.begin(), truth.end());
  up[which] = truth[which].plus_scaled(direction, options.epsilon);
  down[which] = truth[which].plus_scaled(direction, -options.epsilon);
  const ScoreFamily score_up = make_score(up);
  const ScoreFamily score_down = make_score(down);

  const std::size_t shards = std::clamp<std::size_t>(options.shards, 1, options.n_mc);
  const auto parts = parallel_map(shards, options.jobs, [&](std::size_t s) {
    const std::size_t size = options.n_mc / shards + (s < options.n_mc % shards ? 1 : 0);
    const Dataset draws = sampler(size, mix_seed(options.seed, s));
    Moments m;
    for (Index i = 0; i < draws.n(); ++i) {
      const Observation w = draws.observation(i);
      m.push((score_up(beta0, w) - score_down(beta0, w)) / (2.0 * options.epsilon));
    }
    return m;
  });

  Moments total;
  for (const auto& m : parts) total.merge(m);
  OrthogonalityCheck out;
  out.derivative = total.mean;
  out.std_error = std::sqrt(total.m2 / (total.count - 1.0) / total.count);
  return out;
}

}  // namespace orthoscore
