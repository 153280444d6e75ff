// Hot loop of every annealing-style sampler. Built with -ffast-math so the
// lane loops (exp, 64-bit mixing, compares) vectorize; nothing here relies on
// NaN or infinity semantics.
#include "metropolis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "dbnbench/rng.hpp"

namespace dbnbench::detail {

MetropolisBlock::MetropolisBlock(const RbmParams& p, std::span<const std::uint64_t> lane_keys)
    : p_(p),
      n_(p.visible_count()),
      m_(p.hidden_count()),
      lanes_(lane_keys.size()),
      w_(p.weights.flat().begin(), p.weights.flat().end()),
      v_(n_ * kLanes),
      h_(m_ * kLanes),
      field_v_(n_ * kLanes),
      field_h_(m_ * kLanes),
      beta_(kLanes, 1.0f),
      delta_(kLanes),
      keys_(kLanes) {
  if (lanes_ == 0 || lanes_ > kLanes) throw std::invalid_argument("MetropolisBlock: bad lane count");
  // Unused lanes run on throwaway keys so every loop spans the full block.
  std::copy(lane_keys.begin(), lane_keys.end(), keys_.begin());
  for (std::size_t k = lanes_; k < kLanes; ++k) keys_[k] = derive_seed(keys_[0], ~std::uint64_t{0} - k);
  refresh_fields();
}

void MetropolisBlock::randomize() {
  constexpr std::size_t L = kLanes;
  for (std::size_t i = 0; i < n_; ++i, ++counter_) {
    float* v = v_.data() + i * L;
    for (std::size_t k = 0; k < L; ++k) {
      v[k] = counter_uniform(keys_[k], counter_) < 0.5 ? 1.0f : 0.0f;
    }
  }
  for (std::size_t j = 0; j < m_; ++j, ++counter_) {
    float* h = h_.data() + j * L;
    for (std::size_t k = 0; k < L; ++k) {
      h[k] = counter_uniform(keys_[k], counter_) < 0.5 ? 1.0f : 0.0f;
    }
  }
  refresh_fields();
}

void MetropolisBlock::refresh_fields() {
  constexpr std::size_t L = kLanes;
  std::array<double, L> acc;
  for (std::size_t i = 0; i < n_; ++i) {
    acc.fill(p_.visible_bias[i]);
    for (std::size_t j = 0; j < m_; ++j) {
      const double w = p_.weights(i, j);
      const float* h = h_.data() + j * L;
      for (std::size_t k = 0; k < L; ++k) acc[k] += w * h[k];
    }
    std::copy(acc.begin(), acc.end(), field_v_.begin() + static_cast<std::ptrdiff_t>(i * L));
  }
  for (std::size_t j = 0; j < m_; ++j) {
    acc.fill(p_.hidden_bias[j]);
    for (std::size_t i = 0; i < n_; ++i) {
      const double w = p_.weights(i, j);
      const float* v = v_.data() + i * L;
      for (std::size_t k = 0; k < L; ++k) acc[k] += w * v[k];
    }
    std::copy(acc.begin(), acc.end(), field_h_.begin() + static_cast<std::ptrdiff_t>(j * L));
  }
  sweeps_since_refresh_ = 0;
}

void MetropolisBlock::set_beta(double beta) { std::fill(beta_.begin(), beta_.end(), static_cast<float>(beta)); }

namespace {

// Metropolis step for one site across all lanes. Flipping s -> 1-s changes
// the energy by (2s - 1) * field; the flip is taken with probability
// min(1, exp(-beta * dE)). Writes the unit change (+1, -1 or 0) to `delta`.
inline void propose(float* __restrict state, const float* __restrict field, const float* __restrict beta,
                    const std::uint64_t* __restrict keys, std::uint64_t counter, float* __restrict delta) {
  const std::uint64_t offset = counter * 0x9E3779B97F4A7C15ULL;
  for (std::size_t k = 0; k < kLanes; ++k) {
    const float s = state[k];
    const float d_energy = (2.0f * s - 1.0f) * field[k];
    const float log_accept = std::max(std::min(-beta[k] * d_energy, 0.0f), -80.0f);
    const float accept_prob = std::exp(log_accept);
    // Top 24 bits of the lane's counter-th draw.
    const float u = static_cast<float>(static_cast<std::uint32_t>(mix64(keys[k] + offset) >> 40)) * 0x1.0p-24f;
    const float d = u < accept_prob ? 1.0f - 2.0f * s : 0.0f;
    state[k] = s + d;
    delta[k] = d;
  }
}

}  // namespace

void MetropolisBlock::flip_visible(std::size_t i) {
  constexpr std::size_t L = kLanes;
  float* __restrict delta = delta_.data();
  propose(v_.data() + i * L, field_v_.data() + i * L, beta_.data(), keys_.data(), counter_++, delta);
  const float* w = w_.data() + i * m_;
  for (std::size_t j = 0; j < m_; ++j) {
    float* __restrict f = field_h_.data() + j * L;
    const float wij = w[j];
    for (std::size_t k = 0; k < L; ++k) f[k] += wij * delta[k];
  }
}

void MetropolisBlock::flip_hidden(std::size_t j) {
  constexpr std::size_t L = kLanes;
  float* __restrict delta = delta_.data();
  propose(h_.data() + j * L, field_h_.data() + j * L, beta_.data(), keys_.data(), counter_++, delta);
  for (std::size_t i = 0; i < n_; ++i) {
    float* __restrict f = field_v_.data() + i * L;
    const float wij = w_[i * m_ + j];
    for (std::size_t k = 0; k < L; ++k) f[k] += wij * delta[k];
  }
}

void MetropolisBlock::sweep(std::span<const std::uint32_t> order) {
  if (++sweeps_since_refresh_ > kRefreshSweeps) refresh_fields();
  for (std::uint32_t site : order) {
    if (site < n_) {
      flip_visible(site);
    } else {
      flip_hidden(site - n_);
    }
  }
}

double MetropolisBlock::energy(std::size_t lane) const {
  constexpr std::size_t L = kLanes;
  double e = 0.0;
  for (std::size_t i = 0; i < n_; ++i) e -= p_.visible_bias[i] * v_[i * L + lane];
  for (std::size_t j = 0; j < m_; ++j) {
    if (h_[j * L + lane] < 0.5f) continue;
    double field = p_.hidden_bias[j];
    for (std::size_t i = 0; i < n_; ++i) field += p_.weights(i, j) * v_[i * L + lane];
    e -= field;
  }
  return e;
}

JointState MetropolisBlock::state(std::size_t lane) const {
  constexpr std::size_t L = kLanes;
  JointState s{BitVector(n_), BitVector(m_)};
  for (std::size_t i = 0; i < n_; ++i) s.v[i] = v_[i * L + lane] > 0.5f ? 1 : 0;
  for (std::size_t j = 0; j < m_; ++j) s.h[j] = h_[j * L + lane] > 0.5f ? 1 : 0;
  return s;
}

void MetropolisBlock::accumulate(std::size_t lane, ModelExpectations& sums) const {
  constexpr std::size_t L = kLanes;
  for (std::size_t j = 0; j < m_; ++j) sums.h[j] += h_[j * L + lane];
  for (std::size_t i = 0; i < n_; ++i) {
    if (v_[i * L + lane] < 0.5f) continue;
    sums.v[i] += 1.0;
    auto row = sums.vh.row(i);
    for (std::size_t j = 0; j < m_; ++j) row[j] += h_[j * L + lane];
  }
}

}  // namespace dbnbench::detail
