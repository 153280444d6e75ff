#include "dbnbench/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dbnbench/rng.hpp"

namespace dbnbench {

void FeedforwardNet::validate() const {
  if (layers.empty()) throw DimensionError("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].outputs() || layers[l].inputs() == 0 || layers[l].outputs() == 0) {
      throw DimensionError("network layer " + std::to_string(l) + " is malformed");
    }
    if (l + 1 < layers.size() && layers[l].outputs() != layers[l + 1].inputs()) {
      throw DimensionError("network layers " + std::to_string(l) + " and " + std::to_string(l + 1) +
                           " do not chain");
    }
  }
}

FeedforwardNet init_network(const Dbn& dbn) {
  dbn.validate();
  FeedforwardNet net;
  for (const auto& rbm : dbn.layers) net.layers.push_back({rbm.weights, rbm.hidden_bias});
  return net;
}

namespace {

// z = bias + W^T a
void affine(const DenseLayer& layer, std::span<const double> a, std::span<double> z) {
  std::copy(layer.bias.begin(), layer.bias.end(), z.begin());
  const std::size_t out = layer.outputs();
  for (std::size_t i = 0; i < layer.inputs(); ++i) {
    const double ai = a[i];
    const double* w = layer.weights.row(i).data();
    for (std::size_t j = 0; j < out; ++j) z[j] += w[j] * ai;
  }
}

void softmax_inplace(std::span<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - top);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

// Activations of every layer for one input; acts[0] is the input itself and
// acts.back() the output logits.
void forward_all(const FeedforwardNet& net, std::span<const double> input, std::vector<RealVector>& acts) {
  acts.resize(net.layers.size() + 1);
  acts[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    acts[l + 1].resize(net.layers[l].outputs());
    affine(net.layers[l], acts[l], acts[l + 1]);
    if (l + 1 < net.layers.size()) {
      for (double& x : acts[l + 1]) x = sigmoid(x);
    }
  }
}

double log_softmax_at(std::span<const double> z, std::size_t label) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp(x - top);
  return z[label] - top - std::log(sum);
}

void check_input(const FeedforwardNet& net, std::span<const double> input) {
  if (net.layers.empty()) throw DimensionError("network has no layers");
  if (input.size() != net.input_size()) {
    throw DimensionError("network expects " + std::to_string(net.input_size()) + " inputs, got " +
                         std::to_string(input.size()));
  }
}

}  // namespace

RealVector logits(const FeedforwardNet& net, std::span<const double> input) {
  check_input(net, input);
  std::vector<RealVector> acts;
  forward_all(net, input, acts);
  return acts.back();
}

RealVector forward(const FeedforwardNet& net, std::span<const double> input) {
  RealVector z = logits(net, input);
  softmax_inplace(z);
  return z;
}

std::size_t argmax(std::span<const double> scores) {
  return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

double cross_entropy(const FeedforwardNet& net, const Dataset& data, std::span<const std::size_t> items) {
  if (items.empty()) throw std::invalid_argument("cross_entropy: no items");
  double total = 0.0;
  for (std::size_t k : items) {
    const RealVector z = logits(net, data.images.at(k));
    total -= log_softmax_at(z, static_cast<std::size_t>(data.labels.at(k)));
  }
  return total / static_cast<double>(items.size());
}

double cross_entropy(const FeedforwardNet& net, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return cross_entropy(net, data, all);
}

NetGradient loss_gradient(const FeedforwardNet& net, const Dataset& data, std::span<const std::size_t> items) {
  if (items.empty()) throw std::invalid_argument("loss_gradient: no items");
  const std::size_t depth = net.layers.size();
  NetGradient grad;
  for (const auto& layer : net.layers) {
    grad.weights.emplace_back(layer.inputs(), layer.outputs());
    grad.bias.emplace_back(layer.outputs(), 0.0);
  }
  std::vector<RealVector> acts;
  std::vector<RealVector> deltas(depth);
  for (std::size_t k : items) {
    const int label = data.labels.at(k);
    check_input(net, data.images.at(k));
    forward_all(net, data.images[k], acts);
    // Output layer: d loss / d logits = softmax - onehot.
    RealVector& top = deltas[depth - 1];
    top = acts[depth];
    softmax_inplace(top);
    top.at(static_cast<std::size_t>(label)) -= 1.0;
    for (std::size_t l = depth; l-- > 0;) {
      const RealVector& delta = deltas[l];
      const RealVector& a = acts[l];
      auto& gw = grad.weights[l];
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double ai = a[i];
        double* g = gw.row(i).data();
        for (std::size_t j = 0; j < delta.size(); ++j) g[j] += ai * delta[j];
      }
      for (std::size_t j = 0; j < delta.size(); ++j) grad.bias[l][j] += delta[j];
      if (l == 0) break;
      // Back through W and the sigmoid of layer l's input.
      RealVector& below = deltas[l - 1];
      below.assign(a.size(), 0.0);
      const auto& w = net.layers[l].weights;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double* wi = w.row(i).data();
        double s = 0.0;
        for (std::size_t j = 0; j < delta.size(); ++j) s += wi[j] * delta[j];
        below[i] = s * a[i] * (1.0 - a[i]);
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(items.size());
  for (auto& m : grad.weights) {
    for (double& x : m.flat()) x *= scale;
  }
  for (auto& b : grad.bias) {
    for (double& x : b) x *= scale;
  }
  return grad;
}

FeedforwardNet train_backprop(FeedforwardNet net, const Dataset& train, int epochs, const BackpropConfig& cfg,
                              std::uint64_t seed, const NetEpochCallback& on_epoch) {
  net.validate();
  if (cfg.batch_size < 1) throw ConfigError("backprop: batch size must be positive");
  if (epochs <= 0) return net;
  if (train.empty()) throw std::invalid_argument("train_backprop: empty training set");
  for (int label : train.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= net.output_size()) {
      throw std::invalid_argument("train_backprop: label " + std::to_string(label) + " out of range");
    }
  }
  OptimizerState opt(cfg.optimizer);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  RealVector direction;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Stream rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const NetGradient g = loss_gradient(net, train, std::span(order).subspan(start, stop - start));
      opt.begin_step();
      for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto gw = g.weights[l].flat();
        direction.resize(gw.size());
        std::transform(gw.begin(), gw.end(), direction.begin(), [](double x) { return -x; });
        opt.update(2 * l, net.layers[l].weights.flat(), direction);
        direction.resize(g.bias[l].size());
        std::transform(g.bias[l].begin(), g.bias[l].end(), direction.begin(), [](double x) { return -x; });
        opt.update(2 * l + 1, net.layers[l].bias, direction);
      }
    }
    if (on_epoch) on_epoch(epoch + 1, net);
  }
  return net;
}

double evaluate_accuracy(const FeedforwardNet& net, const Dataset& test) {
  if (test.empty()) throw std::invalid_argument("evaluate_accuracy: empty test set");
  std::size_t correct = 0;
  for (std::size_t k = 0; k < test.size(); ++k) {
    const RealVector scores = forward(net, test.images[k]);
    if (static_cast<int>(argmax(scores)) == test.labels[k]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace dbnbench
