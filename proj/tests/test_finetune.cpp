#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "dbnbench/finetune.hpp"
#include "oracles.hpp"

using namespace dbnbench;

namespace {

FeedforwardNet random_net(const std::vector<std::size_t>& shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  FeedforwardNet net;
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    DenseLayer layer{Matrix(shape[l], shape[l + 1]), RealVector(shape[l + 1])};
    for (double& x : layer.weights.flat()) x = u(gen);
    for (double& x : layer.bias) x = u(gen);
    net.layers.push_back(layer);
  }
  return net;
}

Dataset toy_set(std::size_t count, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> pixel(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, 9);
  Dataset d;
  for (std::size_t k = 0; k < count; ++k) {
    RealVector x(width);
    for (double& v : x) v = pixel(gen);
    d.images.push_back(x);
    d.labels.push_back(label(gen));
  }
  return d;
}

std::vector<double> flatten(const NetGradient& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.insert(out.end(), g.weights[l].flat().begin(), g.weights[l].flat().end());
    out.insert(out.end(), g.bias[l].begin(), g.bias[l].end());
  }
  return out;
}

std::vector<std::size_t> all_items(const Dataset& d) {
  std::vector<std::size_t> items(d.size());
  std::iota(items.begin(), items.end(), std::size_t{0});
  return items;
}

}  // namespace

TEST_CASE("init_network copies weights and hidden biases") {
  const Dbn dbn = init_dbn(kDefaultShape, 3);
  Dbn shifted = dbn;
  shifted.layers[1].hidden_bias[4] = 0.75;
  shifted.layers[1].visible_bias[2] = 9.0;
  const FeedforwardNet net = init_network(shifted);
  REQUIRE(net.layers.size() == 3);
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(net.layers[l].weights == shifted.layers[l].weights);
    CHECK(net.layers[l].bias == shifted.layers[l].hidden_bias);
  }
  CHECK(net.layers[0].weights(3, 5) == dbn.layers[0].weights(3, 5));

  Dbn broken = dbn;
  broken.layers[2] = RbmParams(31, 10);
  CHECK_THROWS_AS(init_network(broken), DimensionError);
}

TEST_CASE("forward pass") {
  Dbn zero;
  for (std::size_t l = 0; l + 1 < kDefaultShape.size(); ++l) zero.layers.emplace_back(kDefaultShape[l], kDefaultShape[l + 1]);
  const FeedforwardNet flat = init_network(zero);
  for (double x : forward(flat, RealVector(32, 0.7))) CHECK(x == doctest::Approx(0.1).epsilon(1e-15));

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const FeedforwardNet net = random_net(kDefaultShape, seed, 2.0);
    const auto out = forward(net, toy_set(1, 32, seed).images[0]);
    CHECK(out.size() == 10);
    CHECK(std::fabs(std::accumulate(out.begin(), out.end(), 0.0) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(forward(flat, RealVector(31, 0.0)), DimensionError);
}

TEST_CASE("network Jacobian matches finite differences") {
  const FeedforwardNet net = random_net(kDefaultShape, 5);
  const RealVector x = toy_set(1, 32, 6).images[0];
  const RealVector base = forward(net, x);
  // d out_c / d x_i for every class c, by the chain rule and by differences.
  for (std::size_t c = 0; c < 10; ++c) {
    // Analytic: back-propagate the gradient of out_c = softmax_c(z).
    std::vector<RealVector> acts{x};
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const auto& layer = net.layers[l];
      RealVector z(layer.bias);
      for (std::size_t i = 0; i < layer.inputs(); ++i) {
        for (std::size_t j = 0; j < layer.outputs(); ++j) z[j] += layer.weights(i, j) * acts.back()[i];
      }
      if (l + 1 < net.layers.size()) {
        for (double& t : z) t = 1.0 / (1.0 + std::exp(-t));
      }
      acts.push_back(z);
    }
    RealVector delta(10);
    for (std::size_t k = 0; k < 10; ++k) delta[k] = base[c] * ((k == c ? 1.0 : 0.0) - base[k]);
    for (std::size_t l = net.layers.size(); l-- > 0;) {
      const auto& layer = net.layers[l];
      RealVector below(layer.inputs(), 0.0);
      for (std::size_t i = 0; i < layer.inputs(); ++i) {
        for (std::size_t j = 0; j < layer.outputs(); ++j) below[i] += layer.weights(i, j) * delta[j];
        if (l > 0) below[i] *= acts[l][i] * (1.0 - acts[l][i]);
      }
      delta = below;
    }
    std::vector<double> fd;
    for (std::size_t i = 0; i < 32; ++i) {
      RealVector up = x;
      RealVector down = x;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      fd.push_back((forward(net, up)[c] - forward(net, down)[c]) / 2e-6);
    }
    CHECK(oracle::relative_error(delta, fd) <= 1e-5);
  }
}

TEST_CASE("loss gradient matches finite differences") {
  FeedforwardNet net = random_net(kDefaultShape, 7);
  const Dataset data = toy_set(5, 32, 8);
  const auto items = all_items(data);
  const auto analytic = flatten(loss_gradient(net, data, items));
  std::vector<double> fd;
  const double step = 1e-6;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto probe = [&](double& param) {
      const double keep = param;
      param = keep + step;
      const double up = cross_entropy(net, data, items);
      param = keep - step;
      const double down = cross_entropy(net, data, items);
      param = keep;
      fd.push_back((up - down) / (2.0 * step));
    };
    for (double& w : net.layers[l].weights.flat()) probe(w);
    for (double& b : net.layers[l].bias) probe(b);
  }
  CHECK(oracle::relative_error(analytic, fd) <= 1e-5);
}

TEST_CASE("cross entropy ignores a shift of the output pre-activations") {
  FeedforwardNet net = random_net(kDefaultShape, 9);
  const Dataset data = toy_set(8, 32, 10);
  const double before = cross_entropy(net, data);
  for (double& b : net.layers.back().bias) b += 3.25;
  CHECK(cross_entropy(net, data) == doctest::Approx(before).epsilon(1e-12));
}

TEST_CASE("train_backprop") {
  const FeedforwardNet start = random_net(kDefaultShape, 11, 0.1);
  Dataset one = toy_set(1, 32, 12);
  BackpropConfig cfg;

  SUBCASE("zero epochs") {
    const auto same = train_backprop(start, one, 0, cfg, 1);
    for (std::size_t l = 0; l < 3; ++l) CHECK(same.layers[l].weights == start.layers[l].weights);
  }
  SUBCASE("memorizes a single example") {
    cfg.optimizer.learning_rate = 0.5;
    const auto fit = train_backprop(start, one, 500, cfg, 1);
    CHECK(cross_entropy(fit, one) < 0.01);
  }
  SUBCASE("small steps descend") {
    cfg.optimizer.learning_rate = 0.01;
    cfg.batch_size = 10;
    const Dataset toy = toy_set(40, 32, 13);
    int falls = 0;
    int epochs = 0;
    double last = cross_entropy(start, toy);
    train_backprop(start, toy, 50, cfg, 2, [&](int, const FeedforwardNet& net) {
      const double now = cross_entropy(net, toy);
      CHECK(std::isfinite(now));
      falls += now < last ? 1 : 0;
      ++epochs;
      last = now;
    });
    CHECK(falls >= 0.9 * epochs);
  }
  SUBCASE("deterministic") {
    const Dataset toy = toy_set(30, 32, 14);
    const auto a = train_backprop(start, toy, 3, cfg, 5);
    const auto b = train_backprop(start, toy, 3, cfg, 5);
    for (std::size_t l = 0; l < 3; ++l) CHECK(a.layers[l].weights == b.layers[l].weights);
  }
  SUBCASE("labels out of range") {
    one.labels[0] = 10;
    CHECK_THROWS(train_backprop(start, one, 1, cfg, 1));
  }
}

TEST_CASE("evaluate_accuracy") {
  Dbn zero;
  for (std::size_t l = 0; l + 1 < kDefaultShape.size(); ++l) zero.layers.emplace_back(kDefaultShape[l], kDefaultShape[l + 1]);
  const FeedforwardNet flat = init_network(zero);
  Dataset balanced;
  for (int k = 0; k < 50; ++k) {
    balanced.images.push_back(RealVector(32, 0.1 * (k % 7)));
    balanced.labels.push_back(k % 10);
  }
  // Every score ties, so class 0 is predicted.
  CHECK(evaluate_accuracy(flat, balanced) == doctest::Approx(0.1));

  // Output layer reads the label off a one-hot-like input.
  FeedforwardNet oracle_net;
  oracle_net.layers.push_back({Matrix(32, 10), RealVector(10, 0.0)});
  for (std::size_t c = 0; c < 10; ++c) oracle_net.layers[0].weights(c, c) = 10.0;
  Dataset labelled;
  for (int k = 0; k < 30; ++k) {
    RealVector x(32, 0.0);
    x[static_cast<std::size_t>(k % 10)] = 1.0;
    labelled.images.push_back(x);
    labelled.labels.push_back(k % 10);
  }
  CHECK(evaluate_accuracy(oracle_net, labelled) == 1.0);

  const FeedforwardNet net = random_net(kDefaultShape, 15);
  Dataset data = toy_set(60, 32, 16);
  const double acc = evaluate_accuracy(net, data);
  CHECK((acc >= 0.0 && acc <= 1.0));
  std::mt19937_64 gen(17);
  std::vector<std::size_t> perm = all_items(data);
  std::shuffle(perm.begin(), perm.end(), gen);
  Dataset shuffled;
  for (std::size_t k : perm) {
    shuffled.images.push_back(data.images[k]);
    shuffled.labels.push_back(data.labels[k]);
  }
  CHECK(evaluate_accuracy(net, shuffled) == acc);
  CHECK_THROWS(evaluate_accuracy(net, Dataset{}));
}

TEST_CASE("argmax breaks ties toward the lowest index") {
  CHECK(argmax(RealVector{0.2, 0.5, 0.5, 0.1}) == 1);
  CHECK(argmax(RealVector(10, 0.1)) == 0);
}
