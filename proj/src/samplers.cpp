#include "dbnbench/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dbnbench/rng.hpp"
#include "metropolis.hpp"

namespace dbnbench {

using detail::kLanes;
using detail::MetropolisBlock;

void CdConfig::validate() const {
  if (k < 1) throw ConfigError("CD: k must be at least 1");
}

void SaConfig::validate() const {
  if (sweeps < 2) throw ConfigError("SA: sweeps must be at least 2");
  if (samples < 1) throw ConfigError("SA: samples must be positive");
  if (!(beta_initial >= 0.0) || !std::isfinite(beta_initial)) {
    throw ConfigError("SA: beta_initial must be finite and >= 0");
  }
  if (!(beta_final >= beta_initial) || !std::isfinite(beta_final)) {
    throw ConfigError("SA: beta_final must be finite and >= beta_initial");
  }
}

double SaConfig::beta_at(int sweep) const noexcept {
  return beta_initial + (beta_final - beta_initial) * static_cast<double>(sweep) / static_cast<double>(sweeps - 1);
}

std::vector<double> geometric_ladder(int rungs, double t_max) {
  if (rungs < 1) throw ConfigError("PT: ladder needs at least one rung");
  if (rungs == 1) return {1.0};
  if (!(t_max > 1.0)) throw ConfigError("PT: hottest temperature must exceed 1");
  std::vector<double> betas(static_cast<std::size_t>(rungs));
  for (int r = 0; r < rungs; ++r) {
    const double t = std::pow(t_max, 1.0 - static_cast<double>(r) / (rungs - 1));
    betas[static_cast<std::size_t>(r)] = 1.0 / t;
  }
  betas.back() = 1.0;
  return betas;
}

void PtConfig::validate() const {
  if (betas.empty()) throw ConfigError("PT: empty ladder");
  if (!(betas.front() >= 0.0)) throw ConfigError("PT: inverse temperatures must be >= 0");
  for (std::size_t r = 1; r < betas.size(); ++r) {
    if (!(betas[r] > betas[r - 1])) throw ConfigError("PT: ladder must be strictly increasing");
  }
  if (std::abs(betas.back() - 1.0) > 1e-12) throw ConfigError("PT: last rung must be beta = 1");
  if (sweeps_per_exchange < 1) throw ConfigError("PT: sweeps_per_exchange must be positive");
  if (rounds < 1) throw ConfigError("PT: rounds must be positive");
  if (samples < 1) throw ConfigError("PT: samples must be positive");
}

std::string describe(const SamplerConfig& cfg) {
  std::ostringstream os;
  std::visit(
      [&](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CdConfig>) {
          os << "cd-" << (c.mode == CdMode::marginal ? "marginal" : "discrete") << " k=" << c.k;
        } else if constexpr (std::is_same_v<T, SaConfig>) {
          os << "sa sweeps=" << c.sweeps << " samples=" << c.samples << " beta=" << c.beta_initial << ".."
             << c.beta_final << " order=" << (c.order == UpdateOrder::fixed_block ? "fixed" : "random");
        } else if constexpr (std::is_same_v<T, PtConfig>) {
          os << "pt rungs=" << c.betas.size() << " rounds=" << c.rounds << " samples=" << c.samples;
        } else {
          os << "exact";
        }
      },
      cfg);
  return os.str();
}

ModelExpectations expectations_from_states(std::span<const JointState> states, std::size_t n, std::size_t m) {
  if (states.empty()) throw std::invalid_argument("expectations_from_states: no states");
  ModelExpectations out(n, m);
  for (const auto& s : states) {
    if (s.v.size() != n || s.h.size() != m) throw DimensionError("expectations_from_states: state shape");
    for (std::size_t j = 0; j < m; ++j) out.h[j] += s.h[j];
    for (std::size_t i = 0; i < n; ++i) {
      if (!s.v[i]) continue;
      out.v[i] += 1.0;
      for (std::size_t j = 0; j < m; ++j) out.vh(i, j) += s.h[j];
    }
  }
  const double scale = 1.0 / static_cast<double>(states.size());
  for (double& x : out.vh.flat()) x *= scale;
  for (double& x : out.v) x *= scale;
  for (double& x : out.h) x *= scale;
  return out;
}

namespace {

// Stream tags under the caller's seed.
enum : std::uint64_t { kLaneStream = 1, kOrderStream = 2, kSwapStream = 3 };

class SweepOrder {
 public:
  SweepOrder(std::size_t sites, UpdateOrder order, std::uint64_t key)
      : order_(sites), mode_(order), rng_(key) {
    std::iota(order_.begin(), order_.end(), 0U);
  }

  std::span<const std::uint32_t> next() {
    if (mode_ == UpdateOrder::random_permutation) {
      std::shuffle(order_.begin(), order_.end(), rng_);
    }
    return order_;
  }

 private:
  std::vector<std::uint32_t> order_;
  UpdateOrder mode_;
  Stream rng_;
};

std::vector<std::uint64_t> lane_keys(std::uint64_t seed, std::size_t first, std::size_t count) {
  std::vector<std::uint64_t> keys(count);
  for (std::size_t k = 0; k < count; ++k) keys[k] = derive_seed(seed, kLaneStream, first + k);
  return keys;
}

// Runs the anneals of one block and hands the finished block to `sink`.
template <typename Sink>
void run_annealing(const RbmParams& p, const SaConfig& cfg, std::uint64_t seed, Sink&& sink) {
  cfg.validate();
  p.validate();
  const std::size_t total = static_cast<std::size_t>(cfg.samples);
  const std::size_t sites = p.visible_count() + p.hidden_count();
  for (std::size_t first = 0, block = 0; first < total; first += kLanes, ++block) {
    const std::size_t count = std::min(kLanes, total - first);
    const auto keys = lane_keys(seed, first, count);
    MetropolisBlock chains(p, keys);
    SweepOrder order(sites, cfg.order, derive_seed(seed, kOrderStream, block));
    chains.randomize();
    for (int s = 0; s < cfg.sweeps; ++s) {
      chains.set_beta(cfg.beta_at(s));
      chains.sweep(order.next());
    }
    sink(chains);
  }
}

// Parallel tempering. Each block holds whole ladders; lane (g * R + r) starts
// at rung r of ladder g, and swaps exchange temperatures between lanes rather
// than copying states.
template <typename Record>
void run_tempering(const RbmParams& p, const PtConfig& cfg, std::uint64_t seed, Record&& record) {
  cfg.validate();
  p.validate();
  const std::size_t rungs = cfg.betas.size();
  const std::size_t ladders = static_cast<std::size_t>(cfg.samples);
  const std::size_t per_block = std::max<std::size_t>(1, kLanes / rungs);
  const std::size_t sites = p.visible_count() + p.hidden_count();
  const int burn_in = cfg.rounds / 2;

  for (std::size_t first = 0, block = 0; first < ladders; first += per_block, ++block) {
    const std::size_t count = std::min(per_block, ladders - first);
    const auto keys = lane_keys(seed, first * rungs, count * rungs);
    MetropolisBlock chains(p, keys);
    SweepOrder order(sites, UpdateOrder::random_permutation, derive_seed(seed, kOrderStream, block));
    // lane_at[g][r]: lane currently holding rung r of ladder g.
    std::vector<std::vector<std::size_t>> lane_at(count, std::vector<std::size_t>(rungs));
    std::vector<Stream> swap_rng;
    swap_rng.reserve(count);
    for (std::size_t g = 0; g < count; ++g) {
      swap_rng.emplace_back(derive_seed(seed, kSwapStream, first + g));
      for (std::size_t r = 0; r < rungs; ++r) {
        lane_at[g][r] = g * rungs + r;
        chains.set_lane_beta(g * rungs + r, cfg.betas[r]);
      }
    }
    chains.randomize();
    for (int round = 0; round < cfg.rounds; ++round) {
      for (int s = 0; s < cfg.sweeps_per_exchange; ++s) chains.sweep(order.next());
      for (std::size_t g = 0; g < count; ++g) {
        for (std::size_t r = 0; r + 1 < rungs; ++r) {
          const std::size_t a = lane_at[g][r];
          const std::size_t b = lane_at[g][r + 1];
          const double log_accept = (cfg.betas[r] - cfg.betas[r + 1]) * (chains.energy(a) - chains.energy(b));
          const double u = swap_rng[g].uniform();
          if (log_accept >= 0.0 || u < std::exp(log_accept)) {
            std::swap(lane_at[g][r], lane_at[g][r + 1]);
            chains.set_lane_beta(b, cfg.betas[r]);
            chains.set_lane_beta(a, cfg.betas[r + 1]);
          }
        }
      }
      if (round >= burn_in) {
        for (std::size_t g = 0; g < count; ++g) record(chains, lane_at[g][rungs - 1]);
      }
    }
  }
}

}  // namespace

std::vector<JointState> sa_sample(const RbmParams& p, const SaConfig& cfg, std::uint64_t seed) {
  std::vector<JointState> out;
  out.reserve(static_cast<std::size_t>(std::max(cfg.samples, 0)));
  run_annealing(p, cfg, seed, [&](const MetropolisBlock& chains) {
    for (std::size_t k = 0; k < chains.lanes(); ++k) out.push_back(chains.state(k));
  });
  return out;
}

ModelExpectations sa_estimate(const RbmParams& p, const SaConfig& cfg, std::uint64_t seed) {
  ModelExpectations sums(p.visible_count(), p.hidden_count());
  run_annealing(p, cfg, seed, [&](const MetropolisBlock& chains) {
    for (std::size_t k = 0; k < chains.lanes(); ++k) chains.accumulate(k, sums);
  });
  const double scale = 1.0 / static_cast<double>(cfg.samples);
  for (double& x : sums.vh.flat()) x *= scale;
  for (double& x : sums.v) x *= scale;
  for (double& x : sums.h) x *= scale;
  return sums;
}

std::vector<JointState> pt_sample(const RbmParams& p, const PtConfig& cfg, std::uint64_t seed) {
  std::vector<JointState> out;
  run_tempering(p, cfg, seed, [&](const MetropolisBlock& chains, std::size_t lane) {
    out.push_back(chains.state(lane));
  });
  return out;
}

ModelExpectations pt_estimate(const RbmParams& p, const PtConfig& cfg, std::uint64_t seed) {
  ModelExpectations sums(p.visible_count(), p.hidden_count());
  std::size_t records = 0;
  run_tempering(p, cfg, seed, [&](const MetropolisBlock& chains, std::size_t lane) {
    chains.accumulate(lane, sums);
    ++records;
  });
  const double scale = 1.0 / static_cast<double>(records);
  for (double& x : sums.vh.flat()) x *= scale;
  for (double& x : sums.v) x *= scale;
  for (double& x : sums.h) x *= scale;
  return sums;
}

ModelExpectations exact_estimate(const RbmParams& p) { return exact_expectations(p); }

ModelExpectations estimate_negative_phase(const SamplerConfig& cfg, const RbmParams& p,
                                          std::span<const RealVector> batch, std::uint64_t seed) {
  return std::visit(
      [&](const auto& c) -> ModelExpectations {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, CdConfig>) {
          return cd_estimate(p, batch, c, seed);
        } else if constexpr (std::is_same_v<T, SaConfig>) {
          return sa_estimate(p, c, seed);
        } else if constexpr (std::is_same_v<T, PtConfig>) {
          return pt_estimate(p, c, seed);
        } else {
          return exact_estimate(p);
        }
      },
      cfg);
}

}  // namespace dbnbench
