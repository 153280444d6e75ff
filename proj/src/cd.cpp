// Batched Gibbs chains for contrastive divergence. Built with -ffast-math
// (see src/CMakeLists.txt); activations are clamped so exp never overflows.
#include <algorithm>
#include <cmath>

#include "dbnbench/rng.hpp"
#include "dbnbench/samplers.hpp"

namespace dbnbench {

namespace {

// Chains are advanced a tile at a time; every chain owns its random stream,
// so tiling does not change results.
constexpr std::size_t kTile = 256;

// Unit-major block of values: row u holds unit u of every chain in the tile.
struct Units {
  std::size_t units;
  std::size_t width;
  std::vector<double> data;

  Units(std::size_t u, std::size_t w) : units(u), width(w), data(u * w) {}
  double* row(std::size_t u) { return data.data() + u * width; }
  const double* row(std::size_t u) const { return data.data() + u * width; }
};

// out(j, b) = sigm(bias_j + sum_i W(i, j) in(i, b)), with W read either way round.
template <bool Transposed>
void layer_probs(const Matrix& w, const RealVector& bias, const Units& in, Units& out, std::size_t count) {
  for (std::size_t j = 0; j < out.units; ++j) {
    double* __restrict o = out.row(j);
    std::fill(o, o + count, bias[j]);
    for (std::size_t i = 0; i < in.units; ++i) {
      const double wij = Transposed ? w(j, i) : w(i, j);
      const double* __restrict x = in.row(i);
      for (std::size_t b = 0; b < count; ++b) o[b] += wij * x[b];
    }
    for (std::size_t b = 0; b < count; ++b) {
      o[b] = 1.0 / (1.0 + std::exp(-std::clamp(o[b], -700.0, 700.0)));
    }
  }
}

// Bernoulli draw of every entry; unit u of chain b uses draw `counter + u` of keys[b].
void draw(const Units& prob, const std::uint64_t* __restrict keys, std::uint64_t counter, Units& out,
          std::size_t count) {
  for (std::size_t u = 0; u < prob.units; ++u) {
    const double* __restrict pr = prob.row(u);
    double* __restrict o = out.row(u);
    const std::uint64_t offset = (counter + u) * 0x9E3779B97F4A7C15ULL;
    for (std::size_t b = 0; b < count; ++b) o[b] = to_unit(mix64(keys[b] + offset)) < pr[b] ? 1.0 : 0.0;
  }
}

}  // namespace

ModelExpectations cd_estimate(const RbmParams& p, std::span<const RealVector> batch, const CdConfig& cfg,
                              std::uint64_t seed) {
  cfg.validate();
  p.validate();
  if (batch.empty()) {
    throw std::invalid_argument("cd_estimate: empty batch");
  }
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  const std::size_t chains = batch.size();
  for (const auto& item : batch) {
    if (item.size() != n) {
      throw DimensionError("cd_estimate: batch item has " + std::to_string(item.size()) + " values, RBM expects " +
                           std::to_string(n));
    }
  }

  ModelExpectations out(n, m);
  Units v(n, kTile), vp(n, kTile), h(m, kTile), hp(m, kTile);
  std::vector<std::uint64_t> keys(kTile);
  for (std::size_t first = 0; first < chains; first += kTile) {
    const std::size_t count = std::min(kTile, chains - first);
    for (std::size_t b = 0; b < count; ++b) {
      keys[b] = derive_seed(seed, first + b);
      for (std::size_t i = 0; i < n; ++i) v.row(i)[b] = batch[first + b][i];
    }
    std::uint64_t counter = 0;
    if (cfg.mode == CdMode::discrete) {
      // P(v_i = 1) = data value.
      std::copy(v.data.begin(), v.data.end(), vp.data.begin());
      draw(vp, keys.data(), counter, v, count);
      counter += n;
    }
    for (int step = 0; step < cfg.k; ++step) {
      layer_probs<false>(p.weights, p.hidden_bias, v, hp, count);
      draw(hp, keys.data(), counter, h, count);
      counter += m;
      layer_probs<true>(p.weights, p.visible_bias, h, vp, count);
      draw(vp, keys.data(), counter, v, count);
      counter += n;
    }
    layer_probs<false>(p.weights, p.hidden_bias, v, hp, count);
    const Units* hidden_stats = &hp;
    if (cfg.mode == CdMode::discrete) {
      draw(hp, keys.data(), counter, h, count);
      hidden_stats = &h;
    }

    // Sums in chain order so the result does not depend on the tile size.
    for (std::size_t b = 0; b < count; ++b) {
      for (std::size_t j = 0; j < m; ++j) out.h[j] += hidden_stats->row(j)[b];
      for (std::size_t i = 0; i < n; ++i) {
        if (v.row(i)[b] == 0.0) continue;
        out.v[i] += 1.0;
        auto row = out.vh.row(i);
        for (std::size_t j = 0; j < m; ++j) row[j] += hidden_stats->row(j)[b];
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(chains);
  for (double& x : out.vh.flat()) x *= scale;
  for (double& x : out.v) x *= scale;
  for (double& x : out.h) x *= scale;
  return out;
}

}  // namespace dbnbench
