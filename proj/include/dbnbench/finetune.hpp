#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dbnbench/dataset.hpp"
#include "dbnbench/pretrain.hpp"

namespace dbnbench {

/// Affine map followed by sigmoid (hidden layers) or softmax (last layer).
struct DenseLayer {
  Matrix weights;  // inputs x outputs, same orientation as an RBM's W
  RealVector bias;

  std::size_t inputs() const noexcept { return weights.rows(); }
  std::size_t outputs() const noexcept { return weights.cols(); }
};

struct FeedforwardNet {
  std::vector<DenseLayer> layers;

  std::size_t input_size() const { return layers.front().inputs(); }
  std::size_t output_size() const { return layers.back().outputs(); }
  void validate() const;
};

/// Copies each RBM's W and hidden bias c; visible biases are not used.
FeedforwardNet init_network(const Dbn& dbn);

/// Mean-field forward pass; the result is a probability vector over classes.
RealVector forward(const FeedforwardNet& net, std::span<const double> input);

/// Output-layer pre-activations (softmax logits).
RealVector logits(const FeedforwardNet& net, std::span<const double> input);

/// Gradient of a loss with respect to every layer's weights and biases.
struct NetGradient {
  std::vector<Matrix> weights;
  std::vector<RealVector> bias;
};

/// Mean softmax cross-entropy over the selected items.
double cross_entropy(const FeedforwardNet& net, const Dataset& data, std::span<const std::size_t> items);
double cross_entropy(const FeedforwardNet& net, const Dataset& data);

/// Gradient of the mean cross-entropy over `items`, by backpropagation.
NetGradient loss_gradient(const FeedforwardNet& net, const Dataset& data, std::span<const std::size_t> items);

struct BackpropConfig {
  OptimizerConfig optimizer{};
  int batch_size = 100;
};

/// Called after each fine-tuning epoch with the epoch number (1-based).
using NetEpochCallback = std::function<void(int epoch, const FeedforwardNet&)>;

/// Minibatch gradient descent on the mean cross-entropy.
FeedforwardNet train_backprop(FeedforwardNet net, const Dataset& train, int epochs, const BackpropConfig& cfg,
                              std::uint64_t seed, const NetEpochCallback& on_epoch = {});

/// Fraction of items whose highest class score (lowest index on ties) is the label.
double evaluate_accuracy(const FeedforwardNet& net, const Dataset& test);

/// Index of the largest entry; the first one wins ties.
std::size_t argmax(std::span<const double> scores);

}  // namespace dbnbench
