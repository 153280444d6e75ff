#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbnbench/rbm.hpp"
#include "dbnbench/samplers.hpp"

namespace dbnbench::detail {

/// Number of chains advanced together by one MetropolisBlock.
inline constexpr std::size_t kLanes = 64;
inline constexpr int kRefreshSweeps = 32;

/// A block of independent single-site Metropolis chains on one RBM.
///
/// Storage is site-major ([site][lane]) so that one site update runs as a
/// vector loop across lanes. Each lane draws its uniforms from its own
/// counter-based stream (`lane_keys`); the visiting order is shared by the
/// block. Local fields are cached and patched after every accepted flip.
///
/// Lanes run in single precision; the cached fields are rebuilt from scratch
/// every kRefreshSweeps sweeps so rounding drift cannot accumulate.
///
/// Site numbering: 0..n-1 are visible units, n..n+m-1 hidden units.
class MetropolisBlock {
 public:
  MetropolisBlock(const RbmParams& p, std::span<const std::uint64_t> lane_keys);

  std::size_t lanes() const noexcept { return lanes_; }
  std::size_t sites() const noexcept { return n_ + m_; }

  /// Independent fair coin for every unit of every lane.
  void randomize();

  void set_beta(double beta);
  void set_lane_beta(std::size_t lane, double beta) { beta_[lane] = beta; }

  /// One proposal per site, in the given order.
  void sweep(std::span<const std::uint32_t> order);

  double energy(std::size_t lane) const;
  JointState state(std::size_t lane) const;

  /// Adds lane's v, h and v h^T to the running sums.
  void accumulate(std::size_t lane, ModelExpectations& sums) const;

 private:
  void flip_visible(std::size_t i);
  void flip_hidden(std::size_t j);
  void refresh_fields();

  const RbmParams& p_;
  std::size_t n_;
  std::size_t m_;
  std::size_t lanes_;
  std::vector<float> w_;         // n x m copy of the weights
  std::vector<float> v_;         // n x lanes
  std::vector<float> h_;         // m x lanes
  std::vector<float> field_v_;   // b_i + sum_j W_ij h_j
  std::vector<float> field_h_;   // c_j + sum_i W_ij v_i
  std::vector<float> beta_;
  std::vector<float> delta_;
  std::vector<std::uint64_t> keys_;
  std::uint64_t counter_ = 0;
  int sweeps_since_refresh_ = 0;
};

}  // namespace dbnbench::detail
