#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbnbench {

/// Binary unit states, one byte per unit holding 0 or 1.
using BitVector = std::vector<std::uint8_t>;
using RealVector = std::vector<double>;

/// Raised when argument shapes disagree with a model.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an exact (enumerating) operation is asked to do more than
/// 2^20 work per term.
class SizeGuardError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Largest layer width that exact enumeration will accept: it sums over
/// 2^min(n, m) states of the smaller layer.
inline constexpr std::size_t kMaxExactLayer = 20;

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// One RBM layer: energy E(v,h) = -b.v - c.h - v^T W h.
struct RbmParams {
  Matrix weights;            // n x m, row = visible unit
  RealVector visible_bias;   // b, length n
  RealVector hidden_bias;    // c, length m

  RbmParams() = default;
  RbmParams(std::size_t n, std::size_t m) : weights(n, m), visible_bias(n), hidden_bias(m) {}

  std::size_t visible_count() const noexcept { return visible_bias.size(); }
  std::size_t hidden_count() const noexcept { return hidden_bias.size(); }

  /// Throws DimensionError on inconsistent shapes or empty layers, and
  /// std::domain_error on non-finite entries.
  void validate() const;

  bool operator==(const RbmParams&) const = default;
};

/// Sufficient statistics <v_i h_j>, <v_i>, <h_j> of one phase.
struct ModelExpectations {
  Matrix vh;
  RealVector v;
  RealVector h;

  ModelExpectations() = default;
  ModelExpectations(std::size_t n, std::size_t m) : vh(n, m), v(n), h(m) {}

  std::size_t visible_count() const noexcept { return v.size(); }
  std::size_t hidden_count() const noexcept { return h.size(); }
};

/// Overflow-free logistic function.
double sigmoid(double x) noexcept;

/// log(1 + exp(x)) without overflow.
double softplus(double x) noexcept;

double energy(const RbmParams& p, std::span<const std::uint8_t> v, std::span<const std::uint8_t> h);

/// P(h_j = 1 | v) for every j. `v` may hold probabilities instead of bits.
RealVector hidden_conditional(const RbmParams& p, std::span<const double> v);

/// P(v_i = 1 | h) for every i. `h` may hold probabilities instead of bits.
RealVector visible_conditional(const RbmParams& p, std::span<const double> h);

/// log Z, enumerating the smaller layer and summing the other out analytically.
double log_partition_exact(const RbmParams& p);

/// Exact moments under the Gibbs distribution, by the same enumeration.
ModelExpectations exact_expectations(const RbmParams& p);

/// log sum_h exp(-E(v, h)) for a (possibly real-valued) visible vector.
double log_unnormalized_marginal(const RbmParams& p, std::span<const double> v);

/// Mean over `data` of log P(v); exact, so subject to the size guard.
double log_likelihood(const RbmParams& p, std::span<const RealVector> data);

}  // namespace dbnbench
