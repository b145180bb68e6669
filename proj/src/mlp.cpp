#include "orthoscore/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace orthoscore {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(weight_init_scale > 0.0)) throw std::invalid_argument("weight_init_scale must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw std::invalid_argument("validation_fraction must lie in [0, 1)");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

void MlpArchitecture::validate() const {
  if (depth < 1) throw std::invalid_argument("MLP depth must be at least 1");
  if (width < 1) throw std::invalid_argument("MLP width must be at least 1");
}

TrainingDiverged::TrainingDiverged(std::size_t epoch)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch)), epoch_(epoch) {}

Mlp::Mlp(std::size_t inputs, const MlpArchitecture& arch, Rng& rng, double init_scale) {
  arch.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t fan_in = inputs;
  for (std::size_t l = 0; l <= arch.depth; ++l) {
    const std::size_t fan_out = (l == arch.depth) ? 1 : arch.width;
    Layer layer;
    layer.weight.resize(static_cast<Index>(fan_out), static_cast<Index>(fan_in));
    const double sd = init_scale * std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (Index j = 0; j < layer.weight.cols(); ++j)
      for (Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = sd * normal(rng);
    layer.bias = Vector::Zero(static_cast<Index>(fan_out));
    layers_.push_back(std::move(layer));
    fan_in = fan_out;
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers_) total += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return total;
}

RowVector Mlp::forward(const Matrix& inputs) const {
  Matrix a = inputs;
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = z.cwiseMax(0.0);
  }
  const Layer& out = layers_.back();
  RowVector o = out.weight * a;
  o.array() += out.bias(0);
  return o;
}

namespace {

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

// Per-observation loss contributions and d(loss)/d(output), not yet averaged.
struct LossTerms {
  double total = 0.0;
  RowVector slope;
};

LossTerms loss_terms(const RowVector& out, const Vector& targets, const LossKind& loss,
                     std::span<const Index> rows) {
  const auto b = out.size();
  LossTerms t;
  t.slope.resize(b);
  auto row_of = [&](Index k) { return rows.empty() ? k : rows[static_cast<std::size_t>(k)]; };
  std::visit(
      [&](const auto& kind) {
        using K = std::decay_t<decltype(kind)>;
        for (Index k = 0; k < b; ++k) {
          const Index i = row_of(k);
          const double o = out(k);
          if constexpr (std::is_same_v<K, CrossEntropyOnLogits>) {
            t.total += softplus(o) - targets(i) * o;
            t.slope(k) = sigmoid(o) - targets(i);
          } else {
            double w = 1.0;
            if constexpr (std::is_same_v<K, WeightedSquaredError>) w = kind.weights(i);
            const double r = o - targets(i);
            t.total += w * r * r;
            t.slope(k) = 2.0 * w * r;
          }
        }
      },
      loss);
  return t;
}

Matrix gather_columns(const Matrix& inputs, std::span<const Index> rows) {
  if (rows.empty()) return inputs;
  Matrix out(inputs.rows(), static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out.col(static_cast<Index>(k)) = inputs.col(rows[k]);
  return out;
}

}  // namespace

double Mlp::loss_and_gradient(const Matrix& inputs, const Vector& targets, const LossKind& loss,
                              std::span<const Index> rows, Vector& gradient) const {
  const Matrix batch = gather_columns(inputs, rows);
  const auto b = static_cast<double>(batch.cols());

  // Forward pass keeping activations.
  std::vector<Matrix> acts;
  acts.reserve(layers_.size());
  acts.push_back(batch);
  for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
    Matrix z = layers_[l].weight * acts.back();
    z.colwise() += layers_[l].bias;
    acts.push_back(z.cwiseMax(0.0));
  }
  RowVector out = layers_.back().weight * acts.back();
  out.array() += layers_.back().bias(0);

  LossTerms terms = loss_terms(out, targets, loss, rows);
  Matrix delta = terms.slope / b;  // 1 × B

  gradient.resize(static_cast<Index>(parameter_count()));
  std::vector<Index> offsets(layers_.size());
  Index offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offsets[l] = offset;
    offset += layers_[l].weight.size() + layers_[l].bias.size();
  }

  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const Index wsize = layer.weight.size();
    Eigen::Map<Matrix> gw(gradient.data() + offsets[l], layer.weight.rows(), layer.weight.cols());
    gw.noalias() = delta * acts[l].transpose();
    gradient.segment(offsets[l] + wsize, layer.bias.size()) = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = layer.weight.transpose() * delta;
      // ReLU derivative: active where the post-activation is positive.
      delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return terms.total / b;
}

Vector Mlp::parameters() const {
  Vector flat(static_cast<Index>(parameter_count()));
  Index k = 0;
  for (const auto& l : layers_) {
    flat.segment(k, l.weight.size()) = Eigen::Map<const Vector>(l.weight.data(), l.weight.size());
    k += l.weight.size();
    flat.segment(k, l.bias.size()) = l.bias;
    k += l.bias.size();
  }
  return flat;
}

void Mlp::set_parameters(const Vector& flat) {
  if (flat.size() != static_cast<Index>(parameter_count()))
    throw std::invalid_argument("parameter vector has the wrong length");
  Index k = 0;
  for (auto& l : layers_) {
    Eigen::Map<Vector>(l.weight.data(), l.weight.size()) = flat.segment(k, l.weight.size());
    k += l.weight.size();
    l.bias = flat.segment(k, l.bias.size());
    k += l.bias.size();
  }
}

double evaluate_loss(const Mlp& net, const Matrix& inputs, const Vector& targets, const LossKind& loss,
                     std::span<const Index> rows) {
  const Matrix batch = gather_columns(inputs, rows);
  const RowVector out = net.forward(batch);
  return loss_terms(out, targets, loss, rows).total / static_cast<double>(batch.cols());
}

namespace {

// Trained network together with the input/output standardisation it was fit on.
class MlpFunction final : public FunctionModel {
 public:
  MlpFunction(Mlp net, RowVector center, RowVector scale, double out_center, double out_scale)
      : net_(std::move(net)),
        center_(std::move(center)),
        scale_(std::move(scale)),
        out_center_(out_center),
        out_scale_(out_scale) {}

  double evaluate(RowRef x) const override {
    const Matrix col = ((x - center_).cwiseQuotient(scale_)).transpose();
    return out_center_ + out_scale_ * net_.forward(col)(0);
  }

  Vector evaluate_batch(const CovariateMatrix& x) const override {
    Matrix cols = ((x.rowwise() - center_).array().rowwise() / scale_.array()).matrix().transpose();
    Vector out = net_.forward(cols).transpose();
    return (out.array() * out_scale_ + out_center_).matrix();
  }

 private:
  Mlp net_;
  RowVector center_;
  RowVector scale_;
  double out_center_;
  double out_scale_;
};

void require_finite_inputs(const CovariateMatrix& x, const Vector& targets, const LossKind& loss) {
  if (x.rows() != targets.size()) throw std::invalid_argument("fit_mlp: x and targets differ in length");
  if (x.rows() == 0) throw std::invalid_argument("fit_mlp: empty training set");
  if (!x.allFinite() || !targets.allFinite())
    throw std::invalid_argument("fit_mlp: non-finite training inputs");
  if (const auto* w = std::get_if<WeightedSquaredError>(&loss)) {
    if (w->weights.size() != targets.size())
      throw std::invalid_argument("fit_mlp: weight vector has the wrong length");
    if (!w->weights.allFinite()) throw std::invalid_argument("fit_mlp: non-finite weights");
  }
}

}  // namespace

FunctionEstimate fit_mlp(const CovariateMatrix& x, const Vector& targets, const LossKind& loss,
                         const MlpArchitecture& arch, const TrainConfig& config) {
  arch.validate();
  config.validate();
  require_finite_inputs(x, targets, loss);

  const Index n = x.rows();
  const double nd = static_cast<double>(n);

  RowVector center = x.colwise().mean();
  RowVector scale = ((x.rowwise() - center).array().square().colwise().sum() / nd).sqrt().matrix();
  for (Index j = 0; j < scale.size(); ++j)
    if (!(scale(j) > 1e-12)) scale(j) = 1.0;
  Matrix inputs = ((x.rowwise() - center).array().rowwise() / scale.array()).matrix().transpose();

  // Squared-error targets are standardised; the minimiser transforms affinely,
  // so signed weights are unaffected.
  double out_center = 0.0;
  double out_scale = 1.0;
  Vector scaled_targets = targets;
  if (!std::holds_alternative<CrossEntropyOnLogits>(loss)) {
    out_center = targets.mean();
    const double sd = std::sqrt((targets.array() - out_center).square().mean());
    out_scale = sd > 1e-12 ? sd : 1.0;
    scaled_targets = (targets.array() - out_center) / out_scale;
  }

  Rng rng(mix_seed(config.seed, 0x6d6c70));
  Mlp net(static_cast<std::size_t>(x.cols()), arch, rng, config.weight_init_scale);

  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;
  Vector params = net.parameters();
  Vector m = Vector::Zero(params.size());
  Vector v = Vector::Zero(params.size());
  Vector grad;
  double beta1_t = 1.0;
  double beta2_t = 1.0;

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  std::vector<Index> holdout;
  if (config.validation_fraction > 0.0) {
    Rng split(mix_seed(config.seed, 0x76616c));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[split() % (i + 1)]);
    const auto held = static_cast<std::size_t>(std::ceil(config.validation_fraction * nd));
    if (held >= 1 && held < order.size()) {
      holdout.assign(order.end() - static_cast<std::ptrdiff_t>(held), order.end());
      order.resize(order.size() - held);
      std::sort(holdout.begin(), holdout.end());
      std::sort(order.begin(), order.end());
    }
  }
  const std::size_t batch = std::min(config.batch_size, order.size());
  double best_loss = std::numeric_limits<double>::infinity();
  Vector best_params = params;
  std::size_t stale = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      std::span<const Index> rows(order.data() + start, stop - start);
      const double value = net.loss_and_gradient(inputs, scaled_targets, loss, rows, grad);
      if (!std::isfinite(value) || !grad.allFinite()) throw TrainingDiverged(epoch);

      beta1_t *= beta1;
      beta2_t *= beta2;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
      params.array() -= config.learning_rate * (m.array() / (1.0 - beta1_t)) /
                        ((v.array() / (1.0 - beta2_t)).sqrt() + adam_eps);
      net.set_parameters(params);
    }
    if (!holdout.empty()) {
      const double held_loss = evaluate_loss(net, inputs, scaled_targets, loss, holdout);
      if (!std::isfinite(held_loss)) throw TrainingDiverged(epoch);
      if (held_loss < best_loss) {
        best_loss = held_loss;
        best_params = params;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    }
  }
  if (!holdout.empty()) {
    params = best_params;
    net.set_parameters(params);
  }
  if (!params.allFinite()) throw TrainingDiverged(config.epochs - 1);

  return FunctionEstimate(std::make_shared<MlpFunction>(std::move(net), std::move(center), std::move(scale),
                                                        out_center, out_scale));
}

double gradient_check(const Mlp& net, const LossKind& loss, const CovariateMatrix& x, const Vector& targets) {
  const Matrix inputs = x.transpose();
  Vector analytic;
  net.loss_and_gradient(inputs, targets, loss, {}, analytic);

  constexpr double step = 1e-5;
  Mlp probe = net;
  const Vector base = net.parameters();
  double worst = 0.0;
  for (Index k = 0; k < base.size(); ++k) {
    Vector shifted = base;
    shifted(k) = base(k) + step;
    probe.set_parameters(shifted);
    const double up = evaluate_loss(probe, inputs, targets, loss);
    shifted(k) = base(k) - step;
    probe.set_parameters(shifted);
    const double down = evaluate_loss(probe, inputs, targets, loss);
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic(k)), std::abs(numeric), 1e-5});
    worst = std::max(worst, std::abs(analytic(k) - numeric) / denom);
  }
  return worst;
}

double gradient_check(const MlpArchitecture& arch, const LossKind& loss, const CovariateMatrix& x,
                      const Vector& targets, std::uint64_t seed) {
  Rng rng(seed);
  Mlp net(static_cast<std::size_t>(x.cols()), arch, rng);
  // zero biases leave units with all-dead inputs sitting on the ReLU kink
  std::normal_distribution<double> normal(0.0, 0.1);
  Vector params = net.parameters();
  for (Index k = 0; k < params.size(); ++k) params(k) += normal(rng);
  net.set_parameters(params);
  return gradient_check(net, loss, x, targets);
}

}  // namespace orthoscore
