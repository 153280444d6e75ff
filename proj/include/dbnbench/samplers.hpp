#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dbnbench/rbm.hpp"

namespace dbnbench {

/// Raised for sampler configurations that violate their invariants.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class CdMode {
  marginal,  // chain starts at the data vector; final h statistics are probabilities
  discrete,  // chain starts at a Bernoulli draw of the data; every statistic is sampled
};

/// Contrastive divergence with k alternating Gibbs steps. One chain per batch
/// item, so the chain count is the minibatch size.
struct CdConfig {
  int k = 1;
  CdMode mode = CdMode::marginal;

  void validate() const;
};

enum class UpdateOrder {
  fixed_block,         // all visible units, then all hidden units
  random_permutation,  // fresh permutation of the n+m sites every sweep
};

/// Simulated annealing with a linear-in-beta schedule. Defaults are the
/// two-sweep quench: one sweep at beta 0, one at the target beta 1.
struct SaConfig {
  int sweeps = 2;
  int samples = 400;
  double beta_initial = 0.0;
  double beta_final = 1.0;
  UpdateOrder order = UpdateOrder::random_permutation;

  void validate() const;
  double beta_at(int sweep) const noexcept;
};

/// Geometric ladder of `rungs` temperatures from T = t_max down to T = 1,
/// returned as ascending inverse temperatures ending at 1.
std::vector<double> geometric_ladder(int rungs = 8, double t_max = 8.0);

/// Parallel tempering. `samples` independent ladders are run; each records
/// its beta = 1 replica after every round past the burn-in of rounds / 2.
struct PtConfig {
  std::vector<double> betas = geometric_ladder();
  int sweeps_per_exchange = 1;
  int rounds = 20;
  int samples = 400;

  void validate() const;
};

/// Exact enumeration behind the sampler interface.
struct ExactConfig {};

using SamplerConfig = std::variant<CdConfig, SaConfig, PtConfig, ExactConfig>;

std::string describe(const SamplerConfig& cfg);

struct JointState {
  BitVector v;
  BitVector h;

  bool operator==(const JointState&) const = default;
};

ModelExpectations cd_estimate(const RbmParams& p, std::span<const RealVector> batch, const CdConfig& cfg,
                              std::uint64_t seed);

/// Final states of cfg.samples independent anneals.
std::vector<JointState> sa_sample(const RbmParams& p, const SaConfig& cfg, std::uint64_t seed);
ModelExpectations sa_estimate(const RbmParams& p, const SaConfig& cfg, std::uint64_t seed);

/// All recorded beta = 1 states, ladder-major.
std::vector<JointState> pt_sample(const RbmParams& p, const PtConfig& cfg, std::uint64_t seed);
ModelExpectations pt_estimate(const RbmParams& p, const PtConfig& cfg, std::uint64_t seed);

ModelExpectations exact_estimate(const RbmParams& p);

/// Negative-phase dispatch. CD consumes the minibatch; the others ignore it.
ModelExpectations estimate_negative_phase(const SamplerConfig& cfg, const RbmParams& p,
                                          std::span<const RealVector> batch, std::uint64_t seed);

/// Mean statistics of a list of binary joint states.
ModelExpectations expectations_from_states(std::span<const JointState> states, std::size_t n, std::size_t m);

}  // namespace dbnbench
