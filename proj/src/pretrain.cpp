#include "dbnbench/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dbnbench/rng.hpp"

namespace dbnbench {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("optimizer: learning rate must be positive");
  }
  if (kind == OptimizerKind::momentum && !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("optimizer: momentum coefficient must lie in [0, 1)");
  }
  if (kind == OptimizerKind::adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("optimizer: Adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: Adam epsilon must be positive");
  }
}

OptimizerState::OptimizerState(OptimizerConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void OptimizerState::ensure_slot(std::size_t slot, std::size_t size) {
  if (slot >= first_.size()) {
    first_.resize(slot + 1);
    second_.resize(slot + 1);
  }
  if (first_[slot].empty() && size != 0) {
    first_[slot].assign(size, 0.0);
    if (cfg_.kind == OptimizerKind::adam) second_[slot].assign(size, 0.0);
  }
  if (first_[slot].size() != size) {
    throw DimensionError("optimizer: slot " + std::to_string(slot) + " changed size");
  }
}

void OptimizerState::update(std::size_t slot, std::span<double> params, std::span<const double> direction) {
  if (params.size() != direction.size()) {
    throw DimensionError("optimizer: parameter and direction sizes differ");
  }
  ensure_slot(slot, params.size());
  auto& first = first_[slot];
  const double lr = cfg_.learning_rate;
  if (cfg_.kind == OptimizerKind::momentum) {
    const double mu = cfg_.momentum;
    for (std::size_t k = 0; k < params.size(); ++k) {
      first[k] = mu * first[k] + lr * direction[k];
      params[k] += first[k];
    }
    return;
  }
  auto& second = second_[slot];
  const double b1 = cfg_.beta1;
  const double b2 = cfg_.beta2;
  const long t = std::max<long>(steps_, 1);
  const double correct1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correct2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    first[k] = b1 * first[k] + (1.0 - b1) * direction[k];
    second[k] = b2 * second[k] + (1.0 - b2) * direction[k] * direction[k];
    const double m_hat = first[k] / correct1;
    const double v_hat = second[k] / correct2;
    params[k] += lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

ModelExpectations positive_phase(const RbmParams& p, std::span<const RealVector> batch) {
  if (batch.empty()) throw std::invalid_argument("positive_phase: empty batch");
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  ModelExpectations out(n, m);
  for (const auto& v : batch) {
    const RealVector ph = hidden_conditional(p, v);
    for (std::size_t j = 0; j < m; ++j) out.h[j] += ph[j];
    for (std::size_t i = 0; i < n; ++i) {
      out.v[i] += v[i];
      if (v[i] == 0.0) continue;
      auto row = out.vh.row(i);
      for (std::size_t j = 0; j < m; ++j) row[j] += v[i] * ph[j];
    }
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& x : out.vh.flat()) x *= scale;
  for (double& x : out.v) x *= scale;
  for (double& x : out.h) x *= scale;
  return out;
}

Gradient compute_gradient(const ModelExpectations& pos, const ModelExpectations& neg) {
  const std::size_t n = pos.visible_count();
  const std::size_t m = pos.hidden_count();
  if (neg.visible_count() != n || neg.hidden_count() != m || pos.vh.rows() != n || pos.vh.cols() != m ||
      neg.vh.rows() != n || neg.vh.cols() != m) {
    throw DimensionError("compute_gradient: phase shapes differ");
  }
  Gradient g{Matrix(n, m), RealVector(n), RealVector(m)};
  auto dw = g.dw.flat();
  auto a = pos.vh.flat();
  auto b = neg.vh.flat();
  for (std::size_t k = 0; k < dw.size(); ++k) dw[k] = a[k] - b[k];
  for (std::size_t i = 0; i < n; ++i) g.db[i] = pos.v[i] - neg.v[i];
  for (std::size_t j = 0; j < m; ++j) g.dc[j] = pos.h[j] - neg.h[j];
  return g;
}

void optimizer_step(OptimizerState& state, RbmParams& p, const Gradient& g) {
  if (g.dw.rows() != p.weights.rows() || g.dw.cols() != p.weights.cols() ||
      g.db.size() != p.visible_count() || g.dc.size() != p.hidden_count()) {
    throw DimensionError("optimizer_step: gradient shape does not match parameters");
  }
  state.begin_step();
  state.update(0, p.weights.flat(), g.dw.flat());
  state.update(1, p.visible_bias, g.db);
  state.update(2, p.hidden_bias, g.dc);
}

RbmParams init_rbm(std::size_t n, std::size_t m, std::uint64_t seed) {
  RbmParams p(n, m);
  Stream rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  for (double& w : p.weights.flat()) w = normal(rng);
  return p;
}

namespace {
enum : std::uint64_t { kShuffleStream = 11, kSamplerStream = 12, kInitStream = 13, kPropagateStream = 14 };
}

RbmTrainer::RbmTrainer(RbmParams initial, TrainConfig cfg, std::uint64_t seed)
    : params_(std::move(initial)), cfg_(std::move(cfg)), optimizer_(cfg_.optimizer), seed_(seed) {
  params_.validate();
  if (cfg_.batch_size < 1) throw ConfigError("training: batch size must be positive");
}

void RbmTrainer::run_epoch(std::span<const RealVector> data) {
  if (data.empty()) throw std::invalid_argument("train_rbm: empty training data");
  std::vector<std::size_t> index(data.size());
  std::iota(index.begin(), index.end(), std::size_t{0});
  Stream shuffle_rng(derive_seed(seed_, kShuffleStream, static_cast<std::uint64_t>(epoch_)));
  std::shuffle(index.begin(), index.end(), shuffle_rng);

  const std::size_t batch_size = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<RealVector> batch;
  for (std::size_t start = 0; start < index.size(); start += batch_size) {
    const std::size_t stop = std::min(index.size(), start + batch_size);
    batch.clear();
    for (std::size_t k = start; k < stop; ++k) batch.push_back(data[index[k]]);
    const ModelExpectations pos = positive_phase(params_, batch);
    const ModelExpectations neg =
        estimate_negative_phase(cfg_.sampler, params_, batch, derive_seed(seed_, kSamplerStream, step_));
    optimizer_step(optimizer_, params_, compute_gradient(pos, neg));
    ++step_;
  }
  ++epoch_;
}

RbmParams train_rbm(std::span<const RealVector> data, const TrainConfig& cfg, int epochs, std::uint64_t seed,
                    std::size_t hidden_units) {
  if (data.empty()) throw std::invalid_argument("train_rbm: empty training data");
  RbmTrainer trainer(init_rbm(data.front().size(), hidden_units, derive_seed(seed, kInitStream)), cfg, seed);
  for (int e = 0; e < epochs; ++e) trainer.run_epoch(data);
  return trainer.params();
}

std::vector<RealVector> propagate_samples(const RbmParams& p, std::span<const RealVector> data, std::uint64_t seed) {
  std::vector<RealVector> out;
  out.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    RealVector h = hidden_conditional(p, data[k]);
    const std::uint64_t key = derive_seed(seed, k);
    for (std::size_t j = 0; j < h.size(); ++j) {
      h[j] = counter_uniform(key, j) < h[j] ? 1.0 : 0.0;
    }
    out.push_back(std::move(h));
  }
  return out;
}

void Dbn::validate() const {
  if (layers.empty()) throw DimensionError("DBN has no layers");
  for (const auto& layer : layers) layer.validate();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (layers[l].hidden_count() != layers[l + 1].visible_count()) {
      throw DimensionError("DBN layer " + std::to_string(l) + " has " + std::to_string(layers[l].hidden_count()) +
                           " hidden units but layer " + std::to_string(l + 1) + " expects " +
                           std::to_string(layers[l + 1].visible_count()));
    }
  }
}

Dbn init_dbn(std::span<const std::size_t> shape, std::uint64_t seed) {
  if (shape.size() < 2) throw DimensionError("DBN shape needs at least two layer sizes");
  Dbn dbn;
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    if (shape[l] == 0 || shape[l + 1] == 0) throw DimensionError("DBN layer sizes must be positive");
    dbn.layers.push_back(init_rbm(shape[l], shape[l + 1], derive_seed(seed, kInitStream, l)));
  }
  return dbn;
}

Dbn pretrain_dbn(std::span<const RealVector> images, const TrainConfig& cfg, int epochs, std::uint64_t seed,
                 std::span<const std::size_t> shape, const DbnEpochCallback& on_epoch) {
  Dbn dbn = init_dbn(shape, seed);
  if (epochs <= 0) return dbn;
  if (images.empty()) throw std::invalid_argument("pretrain_dbn: empty dataset");
  for (const auto& img : images) {
    if (img.size() != shape.front()) throw DimensionError("pretrain_dbn: image size does not match input layer");
  }

  std::vector<RbmTrainer> trainers;
  for (std::size_t l = 0; l < dbn.layers.size(); ++l) {
    trainers.emplace_back(dbn.layers[l], cfg, derive_seed(seed, l));
  }
  for (int epoch = 0; epoch < epochs; ++epoch) {
    trainers[0].run_epoch(images);
    dbn.layers[0] = trainers[0].params();
    // Layer l trains on samples of layer l-1's hidden units given layer
    // l-1's own (already refreshed) training data.
    std::vector<RealVector> below;
    for (std::size_t l = 1; l < trainers.size(); ++l) {
      const std::uint64_t key = derive_seed(derive_seed(seed, kPropagateStream, l), static_cast<std::uint64_t>(epoch));
      below = l == 1 ? propagate_samples(dbn.layers[0], images, key)
                     : propagate_samples(dbn.layers[l - 1], below, key);
      trainers[l].run_epoch(below);
      dbn.layers[l] = trainers[l].params();
    }
    if (on_epoch) on_epoch(epoch + 1, dbn);
  }
  return dbn;
}

}  // namespace dbnbench
