#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dbnbench/rbm.hpp"
#include "dbnbench/samplers.hpp"

namespace dbnbench {

/// d log P / d(W, b, c).
struct Gradient {
  Matrix dw;
  RealVector db;
  RealVector dc;
};

enum class OptimizerKind { momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::momentum;
  double learning_rate = 0.1;
  double momentum = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerConfig momentum_default() { return {}; }
  static OptimizerConfig adam_default() { return {OptimizerKind::adam, 0.001}; }

  void validate() const;
};

/// Accumulators of a momentum or Adam optimizer over a fixed list of
/// parameter blocks ("slots"). Every call moves parameters *up* the given
/// direction; callers minimizing a loss pass the negated gradient.
class OptimizerState {
 public:
  explicit OptimizerState(OptimizerConfig cfg);

  const OptimizerConfig& config() const noexcept { return cfg_; }
  long steps() const noexcept { return steps_; }

  /// Starts a new step (advances Adam's bias-correction counter).
  void begin_step() noexcept { ++steps_; }

  /// Applies the update for one slot. The slot's accumulators are created
  /// zeroed on first use; later calls must pass the same size.
  void update(std::size_t slot, std::span<double> params, std::span<const double> direction);

  /// Velocity (momentum) or first moment (Adam) of a slot.
  std::span<const double> first_moment(std::size_t slot) const { return first_.at(slot); }

 private:
  void ensure_slot(std::size_t slot, std::size_t size);

  OptimizerConfig cfg_;
  long steps_ = 0;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
};

/// Data expectations: v averaged directly, h through P(h | v).
ModelExpectations positive_phase(const RbmParams& p, std::span<const RealVector> batch);

/// Data-minus-model differences.
Gradient compute_gradient(const ModelExpectations& pos, const ModelExpectations& neg);

/// One ascent step on all of W, b, c.
void optimizer_step(OptimizerState& state, RbmParams& p, const Gradient& g);

/// Zero biases, N(0, 0.01^2) weights.
RbmParams init_rbm(std::size_t n, std::size_t m, std::uint64_t seed);

struct TrainConfig {
  SamplerConfig sampler = SaConfig{};
  OptimizerConfig optimizer{};
  int batch_size = 100;
};

/// Trains one RBM for `epochs` passes over `data` and returns the parameters.
RbmParams train_rbm(std::span<const RealVector> data, const TrainConfig& cfg, int epochs, std::uint64_t seed,
                    std::size_t hidden_units);

/// Incremental RBM trainer: `train_rbm` is a loop over `run_epoch`.
class RbmTrainer {
 public:
  RbmTrainer(RbmParams initial, TrainConfig cfg, std::uint64_t seed);

  /// One shuffled pass over `data` in minibatches.
  void run_epoch(std::span<const RealVector> data);

  const RbmParams& params() const noexcept { return params_; }
  int epochs_done() const noexcept { return epoch_; }

 private:
  RbmParams params_;
  TrainConfig cfg_;
  OptimizerState optimizer_;
  std::uint64_t seed_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
};

/// Binary sample of the hidden layer for every item.
std::vector<RealVector> propagate_samples(const RbmParams& p, std::span<const RealVector> data, std::uint64_t seed);

/// Stack of RBMs; layer l's hidden count equals layer l+1's visible count.
struct Dbn {
  std::vector<RbmParams> layers;

  /// Throws DimensionError when the chain is broken or empty.
  void validate() const;
};

/// Unit counts of the default network: 32 inputs, two hidden layers of 32,
/// 10 outputs.
inline const std::vector<std::size_t> kDefaultShape{32, 32, 32, 10};

Dbn init_dbn(std::span<const std::size_t> shape, std::uint64_t seed);

/// Called after each pretraining epoch with the epoch number (1-based).
using DbnEpochCallback = std::function<void(int epoch, const Dbn&)>;

/// Greedy layer-wise pretraining. Every epoch gives each layer one pass: layer
/// 1 over the images, layer l over fresh binary samples propagated up through
/// the current layers below it.
Dbn pretrain_dbn(std::span<const RealVector> images, const TrainConfig& cfg, int epochs, std::uint64_t seed,
                 std::span<const std::size_t> shape = kDefaultShape, const DbnEpochCallback& on_epoch = {});

}  // namespace dbnbench
