#include <doctest.h>

#include <cmath>

#include "dbnbench/pretrain.hpp"
#include "oracles.hpp"

using namespace dbnbench;

namespace {

std::vector<double> flatten(const Gradient& g) {
  std::vector<double> out(g.dw.flat().begin(), g.dw.flat().end());
  out.insert(out.end(), g.db.begin(), g.db.end());
  out.insert(out.end(), g.dc.begin(), g.dc.end());
  return out;
}

Gradient filled(std::size_t n, std::size_t m, double value) {
  return {Matrix(n, m, value), RealVector(n, value), RealVector(m, value)};
}

}  // namespace

TEST_CASE("positive phase") {
  RbmParams zero(3, 2);
  const std::vector<RealVector> ones(4, RealVector(3, 1.0));
  auto pos = positive_phase(zero, ones);
  for (double x : pos.v) CHECK(x == 1.0);
  for (double x : pos.h) CHECK(x == 0.5);
  for (double x : pos.vh.flat()) CHECK(x == 0.5);

  RbmParams p = oracle::random_rbm(3, 2, 3);
  pos = positive_phase(p, std::vector<RealVector>(2, RealVector(3, 0.0)));
  for (double x : pos.v) CHECK(x == 0.0);
  for (double x : pos.vh.flat()) CHECK(x == 0.0);
  for (std::size_t j = 0; j < 2; ++j) CHECK(pos.h[j] == doctest::Approx(sigmoid(p.hidden_bias[j])));

  CHECK_THROWS(positive_phase(p, std::vector<RealVector>{}));
}

TEST_CASE("positive phase matches per-item enumeration of the conditional") {
  const RbmParams p = oracle::random_rbm(4, 3, 21);
  const auto batch = oracle::random_binary(7, 4, 22);
  ModelExpectations want(4, 3);
  for (const auto& v : batch) {
    // P(h | v) by summing exp(-E) over the 8 hidden states.
    double norm = 0.0;
    RealVector on(3, 0.0);
    for (std::uint64_t hc = 0; hc < 8; ++hc) {
      const double w = std::exp(-oracle::energy(p, v, oracle::bits(hc, 3)));
      norm += w;
      for (std::size_t j = 0; j < 3; ++j) on[j] += ((hc >> j) & 1U) ? w : 0.0;
    }
    for (std::size_t j = 0; j < 3; ++j) {
      want.h[j] += on[j] / norm / 7.0;
      for (std::size_t i = 0; i < 4; ++i) want.vh(i, j) += v[i] * on[j] / norm / 7.0;
    }
    for (std::size_t i = 0; i < 4; ++i) want.v[i] += v[i] / 7.0;
  }
  CHECK(oracle::max_abs_diff(positive_phase(p, batch), want) < 1e-14);
}

TEST_CASE("compute_gradient") {
  const auto e = exact_expectations(oracle::random_rbm(3, 2, 4));
  for (double x : flatten(compute_gradient(e, e))) CHECK(x == 0.0);

  ModelExpectations ones(3, 2);
  for (double& x : ones.vh.flat()) x = 1.0;
  std::fill(ones.v.begin(), ones.v.end(), 1.0);
  std::fill(ones.h.begin(), ones.h.end(), 1.0);
  for (double x : flatten(compute_gradient(ones, ModelExpectations(3, 2)))) CHECK(x == 1.0);

  CHECK_THROWS_AS(compute_gradient(ModelExpectations(3, 2), ModelExpectations(2, 3)), DimensionError);
}

TEST_CASE("exact gradient matches finite differences of the log likelihood") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RbmParams p = oracle::random_rbm(4, 3, 400 + seed);
    const auto data = oracle::random_binary(10, 4, 500 + seed);
    const Gradient g = compute_gradient(positive_phase(p, data), exact_expectations(p));
    const auto fd = oracle::finite_difference(p, [&](const RbmParams& q) { return oracle::log_likelihood(q, data); });
    CHECK(oracle::relative_error(flatten(g), fd) <= 1e-6);
  }
}

TEST_CASE("optimizer steps") {
  SUBCASE("zero gradient leaves parameters alone") {
    for (const auto& cfg : {OptimizerConfig::momentum_default(), OptimizerConfig::adam_default()}) {
      RbmParams p = oracle::random_rbm(3, 2, 9);
      const RbmParams before = p;
      OptimizerState state(cfg);
      optimizer_step(state, p, filled(3, 2, 0.0));
      CHECK(p == before);
    }
  }
  SUBCASE("momentum with mu = 0 is plain ascent") {
    OptimizerConfig cfg = OptimizerConfig::momentum_default();
    cfg.momentum = 0.0;
    cfg.learning_rate = 0.25;
    RbmParams p(2, 2);
    OptimizerState state(cfg);
    optimizer_step(state, p, filled(2, 2, 2.0));
    optimizer_step(state, p, filled(2, 2, 2.0));
    for (double x : p.weights.flat()) CHECK(x == doctest::Approx(1.0));
  }
  SUBCASE("momentum accumulates velocity") {
    OptimizerConfig cfg = OptimizerConfig::momentum_default();  // eta 0.1, mu 0.5
    RbmParams p(1, 1);
    OptimizerState state(cfg);
    optimizer_step(state, p, filled(1, 1, 1.0));  // v = 0.1
    optimizer_step(state, p, filled(1, 1, 1.0));  // v = 0.05 + 0.1
    CHECK(p.weights(0, 0) == doctest::Approx(0.25));
  }
  SUBCASE("first adam step has magnitude eta") {
    OptimizerConfig cfg = OptimizerConfig::adam_default();
    RbmParams p(2, 3);
    OptimizerState state(cfg);
    Gradient g = filled(2, 3, 0.0);
    g.dw(0, 0) = 3.0;
    g.dw(1, 2) = -0.02;
    g.db[1] = 1e-3;
    optimizer_step(state, p, g);
    CHECK(p.weights(0, 0) == doctest::Approx(0.001).epsilon(1e-6));
    CHECK(p.weights(1, 2) == doctest::Approx(-0.001).epsilon(1e-5));
    CHECK(p.visible_bias[1] == doctest::Approx(0.001).epsilon(1e-4));
    CHECK(p.weights(0, 1) == 0.0);
    CHECK(state.steps() == 1);
  }
  SUBCASE("bad hyperparameters") {
    OptimizerConfig cfg;
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = OptimizerConfig::adam_default();
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("init_rbm") {
  const RbmParams p = init_rbm(32, 32, 1);
  for (double x : p.visible_bias) CHECK(x == 0.0);
  for (double x : p.hidden_bias) CHECK(x == 0.0);
  double sum = 0.0;
  double sq = 0.0;
  for (double x : p.weights.flat()) {
    sum += x;
    sq += x * x;
  }
  const double count = 1024.0;
  CHECK(std::fabs(sum / count) < 5.0 * 0.01 / std::sqrt(count));
  CHECK(std::sqrt(sq / count) == doctest::Approx(0.01).epsilon(0.1));
  CHECK(init_rbm(32, 32, 1) == p);
  CHECK_FALSE(init_rbm(32, 32, 2) == p);
}

TEST_CASE("train_rbm") {
  const auto data = oracle::random_binary(40, 4, 31);
  TrainConfig cfg{ExactConfig{}, OptimizerConfig::momentum_default(), 10};

  SUBCASE("zero epochs returns the initial parameters") {
    const RbmParams init = init_rbm(4, 3, 5);
    RbmTrainer trainer(init, cfg, 1);
    CHECK(trainer.params() == init);
    const RbmParams untouched = train_rbm(data, cfg, 0, 5, 3);
    for (double x : untouched.visible_bias) CHECK(x == 0.0);
    for (double x : untouched.hidden_bias) CHECK(x == 0.0);
    for (double x : untouched.weights.flat()) CHECK(std::fabs(x) < 0.06);
  }
  SUBCASE("deterministic") {
    cfg.sampler = SaConfig{};
    CHECK(train_rbm(data, cfg, 2, 5, 3) == train_rbm(data, cfg, 2, 5, 3));
    cfg.sampler = CdConfig{};
    CHECK(train_rbm(data, cfg, 2, 5, 3) == train_rbm(data, cfg, 2, 5, 3));
  }
  SUBCASE("exact gradient ascent raises the likelihood") {
    cfg.optimizer.learning_rate = 0.01;
    int rises = 0;
    int epochs_total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto toy = oracle::random_binary(40, 4, 600 + seed);
      RbmTrainer trainer(init_rbm(4, 3, seed), cfg, seed);
      double last = log_likelihood(trainer.params(), toy);
      for (int epoch = 0; epoch < 20; ++epoch) {
        trainer.run_epoch(toy);
        const double now = log_likelihood(trainer.params(), toy);
        rises += now >= last ? 1 : 0;
        ++epochs_total;
        last = now;
      }
    }
    CHECK(rises >= 0.95 * epochs_total);
  }
}

TEST_CASE("propagate_samples") {
  RbmParams p(3, 4);
  p.hidden_bias = {50.0, -50.0, 50.0, -50.0};
  const auto out = propagate_samples(p, std::vector<RealVector>(5, RealVector{0.3, 0.2, 0.9}), 1);
  for (const auto& h : out) CHECK(h == RealVector{1.0, 0.0, 1.0, 0.0});

  const RbmParams zero(2, 8);
  const auto noisy = propagate_samples(zero, std::vector<RealVector>(2000, RealVector(2, 1.0)), 2);
  double ones = 0.0;
  for (const auto& h : noisy) {
    for (double x : h) {
      CHECK((x == 0.0 || x == 1.0));
      ones += x;
    }
  }
  const double trials = 16000.0;
  CHECK(std::fabs(ones / trials - 0.5) < 5.0 * std::sqrt(0.25 / trials));
  CHECK(propagate_samples(zero, std::vector<RealVector>(3, RealVector(2, 1.0)), 7) ==
        propagate_samples(zero, std::vector<RealVector>(3, RealVector(2, 1.0)), 7));
  CHECK_THROWS_AS(propagate_samples(zero, std::vector<RealVector>{RealVector(3, 0.0)}, 1), DimensionError);
}

// Noisy copies of a few random prototypes, so every layer has structure to find.
std::vector<RealVector> prototype_images(std::size_t count, std::uint64_t seed) {
  const auto protos = oracle::random_binary(3, 32, seed);
  std::mt19937_64 gen(seed + 1);
  std::bernoulli_distribution flip(0.05);
  std::vector<RealVector> out;
  for (std::size_t k = 0; k < count; ++k) {
    RealVector v = protos[k % protos.size()];
    for (double& x : v) x = flip(gen) ? 1.0 - x : x;
    out.push_back(v);
  }
  return out;
}

TEST_CASE("pretrain_dbn") {
  const auto images = prototype_images(20, 41);
  TrainConfig cfg{ExactConfig{}, OptimizerConfig::momentum_default(), 10};
  const std::vector<std::size_t> toy_shape{32, 8, 8, 10};

  SUBCASE("default shape") {
    const Dbn dbn = pretrain_dbn(images, cfg, 0, 1);
    REQUIRE(dbn.layers.size() == 3);
    CHECK(dbn.layers[0].weights.rows() == 32);
    CHECK(dbn.layers[0].weights.cols() == 32);
    CHECK(dbn.layers[1].weights.rows() == 32);
    CHECK(dbn.layers[1].weights.cols() == 32);
    CHECK(dbn.layers[2].weights.rows() == 32);
    CHECK(dbn.layers[2].weights.cols() == 10);
    CHECK(dbn.layers[0] == init_dbn(kDefaultShape, 1).layers[0]);
  }
  SUBCASE("every layer's likelihood of its own input rises") {
    cfg.optimizer.learning_rate = 0.05;
    const Dbn before = pretrain_dbn(images, cfg, 0, 3, toy_shape);
    const Dbn after = pretrain_dbn(images, cfg, 10, 3, toy_shape);
    after.validate();
    CHECK(log_likelihood(after.layers[0], images) > log_likelihood(before.layers[0], images));
    // Inputs of the upper layers: fresh samples through the trained layers below.
    auto below = propagate_samples(after.layers[0], images, 99);
    for (std::size_t l = 1; l < 3; ++l) {
      CHECK(log_likelihood(after.layers[l], below) > log_likelihood(before.layers[l], below));
      below = propagate_samples(after.layers[l], below, 100 + l);
    }
  }
  SUBCASE("snapshots follow one trajectory") {
    std::vector<Dbn> seen;
    const Dbn last = pretrain_dbn(images, cfg, 3, 4, toy_shape, [&](int, const Dbn& d) { seen.push_back(d); });
    REQUIRE(seen.size() == 3);
    CHECK(seen.back().layers == last.layers);
    CHECK(pretrain_dbn(images, cfg, 2, 4, toy_shape).layers == seen[1].layers);
  }
  SUBCASE("input width must match") {
    CHECK_THROWS_AS(pretrain_dbn(oracle::random_binary(3, 5, 1), cfg, 1, 1, toy_shape), DimensionError);
  }
}
