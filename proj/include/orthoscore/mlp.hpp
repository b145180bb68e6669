#pragma once

#include "orthoscore/core.hpp"

#include <cstdint>
#include <stdexcept>
#include <variant>
#include <vector>

namespace orthoscore {

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Multiplier on the He standard deviation sqrt(2 / fan_in).
  double weight_init_scale = 1.0;
  /// Share of rows held out to pick the best epoch; 0 trains on all rows for every epoch.
  double validation_fraction = 0.0;
  /// Epochs without validation improvement before stopping.
  std::size_t patience = 10;

  void validate() const;
};

struct MlpArchitecture {
  std::size_t depth = 4;
  std::size_t width = 80;

  void validate() const;
};

struct SquaredError {};
/// Weights may be signed (kappa weights are).
struct WeightedSquaredError {
  Vector weights;
};
struct CrossEntropyOnLogits {};

using LossKind = std::variant<SquaredError, WeightedSquaredError, CrossEntropyOnLogits>;

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(std::size_t epoch);
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Fully connected ReLU network with scalar output:
///   x ↦ W_D relu(... relu(W_0 x + b_0) ...) + b_D
class Mlp {
 public:
  struct Layer {
    Matrix weight;  // out × in
    Vector bias;
  };

  Mlp() = default;
  Mlp(std::size_t inputs, const MlpArchitecture& arch, Rng& rng, double init_scale = 1.0);

  std::size_t inputs() const { return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols()); }
  std::size_t parameter_count() const;
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Column-major batch: each column of `inputs` is one observation.
  RowVector forward(const Matrix& inputs) const;

  /// Mean loss over the batch and its gradient, flattened in layer order
  /// (weight column-major, then bias).
  double loss_and_gradient(const Matrix& inputs, const Vector& targets, const LossKind& loss,
                           std::span<const Index> rows, Vector& gradient) const;

  Vector parameters() const;
  void set_parameters(const Vector& flat);

 private:
  std::vector<Layer> layers_;
};

/// Mean loss for the given rows (all rows when `rows` is empty).
double evaluate_loss(const Mlp& net, const Matrix& inputs, const Vector& targets,
                     const LossKind& loss, std::span<const Index> rows = {});

FunctionEstimate fit_mlp(const CovariateMatrix& x, const Vector& targets, const LossKind& loss,
                         const MlpArchitecture& arch = {}, const TrainConfig& config = {});

/// Max relative error between backprop and central differences (step 1e-5)
/// over all parameters of `net` at the given data.
double gradient_check(const Mlp& net, const LossKind& loss, const CovariateMatrix& x,
                      const Vector& targets);

/// Same, on a freshly initialised network drawn from `seed`.
double gradient_check(const MlpArchitecture& arch, const LossKind& loss, const CovariateMatrix& x,
                      const Vector& targets, std::uint64_t seed);

}  // namespace orthoscore
