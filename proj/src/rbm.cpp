#include "dbnbench/rbm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dbnbench {

void RbmParams::validate() const {
  const std::size_t n = visible_bias.size();
  const std::size_t m = hidden_bias.size();
  if (n == 0 || m == 0) {
    throw DimensionError("RBM layers must be nonempty");
  }
  if (weights.rows() != n || weights.cols() != m) {
    throw DimensionError("weight matrix is " + std::to_string(weights.rows()) + "x" +
                         std::to_string(weights.cols()) + ", expected " + std::to_string(n) + "x" +
                         std::to_string(m));
  }
  auto finite = [](double x) { return std::isfinite(x); };
  if (!std::ranges::all_of(weights.flat(), finite) || !std::ranges::all_of(visible_bias, finite) ||
      !std::ranges::all_of(hidden_bias, finite)) {
    throw std::domain_error("RBM parameters must be finite");
  }
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double energy(const RbmParams& p, std::span<const std::uint8_t> v, std::span<const std::uint8_t> h) {
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  if (v.size() != n || h.size() != m) {
    throw DimensionError("energy: state does not match RBM shape");
  }
  double e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    e -= p.visible_bias[i] * v[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    e -= p.hidden_bias[j] * h[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i]) continue;
    auto w = p.weights.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      e -= w[j] * h[j];
    }
  }
  return e;
}

RealVector hidden_conditional(const RbmParams& p, std::span<const double> v) {
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  if (v.size() != n) {
    throw DimensionError("hidden_conditional: expected " + std::to_string(n) + " visible values, got " +
                         std::to_string(v.size()));
  }
  RealVector act(p.hidden_bias);
  for (std::size_t i = 0; i < n; ++i) {
    const double vi = v[i];
    auto w = p.weights.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      act[j] += w[j] * vi;
    }
  }
  for (double& a : act) a = sigmoid(a);
  return act;
}

RealVector visible_conditional(const RbmParams& p, std::span<const double> h) {
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  if (h.size() != m) {
    throw DimensionError("visible_conditional: expected " + std::to_string(m) + " hidden values, got " +
                         std::to_string(h.size()));
  }
  RealVector out(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto w = p.weights.row(i);
    double a = p.visible_bias[i];
    for (std::size_t j = 0; j < m; ++j) {
      a += w[j] * h[j];
    }
    out[i] = sigmoid(a);
  }
  return out;
}

namespace {

void check_exact_size(const RbmParams& p, const char* what) {
  const std::size_t small = std::min(p.visible_count(), p.hidden_count());
  if (small > kMaxExactLayer) {
    throw SizeGuardError(std::string(what) + ": smaller layer has " + std::to_string(small) +
                         " units, exact enumeration is limited to " + std::to_string(kMaxExactLayer));
  }
}

// Enumerates the smaller layer ("outer", size k) and integrates out the other
// one ("inner", size l). For each outer configuration s the callback receives
// log w(s) = outer_bias.s + sum_r softplus(inner_bias_r + sum_q W_qr s_q) and
// the inner conditional probabilities. Couplings are addressed through
// `coupling(q, r)` so the same code serves both orientations.
template <typename Visit>
void enumerate_outer(const RbmParams& p, Visit&& visit) {
  const bool outer_is_hidden = p.hidden_count() <= p.visible_count();
  const std::size_t k = outer_is_hidden ? p.hidden_count() : p.visible_count();
  const std::size_t l = outer_is_hidden ? p.visible_count() : p.hidden_count();
  const RealVector& outer_bias = outer_is_hidden ? p.hidden_bias : p.visible_bias;
  const RealVector& inner_bias = outer_is_hidden ? p.visible_bias : p.hidden_bias;
  auto coupling = [&](std::size_t q, std::size_t r) {
    return outer_is_hidden ? p.weights(r, q) : p.weights(q, r);
  };

  std::vector<std::uint8_t> outer(k);
  RealVector inner_prob(l);
  const std::uint64_t count = std::uint64_t{1} << k;
  for (std::uint64_t code = 0; code < count; ++code) {
    double log_w = 0.0;
    for (std::size_t q = 0; q < k; ++q) {
      outer[q] = static_cast<std::uint8_t>((code >> q) & 1U);
      if (outer[q]) log_w += outer_bias[q];
    }
    for (std::size_t r = 0; r < l; ++r) {
      double a = inner_bias[r];
      for (std::size_t q = 0; q < k; ++q) {
        if (outer[q]) a += coupling(q, r);
      }
      log_w += softplus(a);
      inner_prob[r] = sigmoid(a);
    }
    visit(outer_is_hidden, std::span<const std::uint8_t>(outer), std::span<const double>(inner_prob), log_w);
  }
}

}  // namespace

double log_partition_exact(const RbmParams& p) {
  p.validate();
  check_exact_size(p, "log_partition_exact");
  double max_log = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  enumerate_outer(p, [&](bool, auto, auto, double log_w) {
    if (log_w > max_log) {
      sum = sum * std::exp(max_log - log_w) + 1.0;
      max_log = log_w;
    } else {
      sum += std::exp(log_w - max_log);
    }
  });
  return max_log + std::log(sum);
}

ModelExpectations exact_expectations(const RbmParams& p) {
  p.validate();
  check_exact_size(p, "exact_expectations");
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  ModelExpectations acc(n, m);
  double max_log = -std::numeric_limits<double>::infinity();
  double total = 0.0;

  auto rescale = [&](double factor) {
    total *= factor;
    for (double& x : acc.vh.flat()) x *= factor;
    for (double& x : acc.v) x *= factor;
    for (double& x : acc.h) x *= factor;
  };

  enumerate_outer(p, [&](bool outer_is_hidden, std::span<const std::uint8_t> outer,
                         std::span<const double> inner, double log_w) {
    if (log_w > max_log) {
      if (total > 0.0) rescale(std::exp(max_log - log_w));
      max_log = log_w;
    }
    const double w = std::exp(log_w - max_log);
    total += w;
    // Visible/hidden expectation vectors seen from the outer layer's view.
    if (outer_is_hidden) {
      for (std::size_t j = 0; j < m; ++j) {
        if (outer[j]) acc.h[j] += w;
      }
      for (std::size_t i = 0; i < n; ++i) {
        const double wi = w * inner[i];
        acc.v[i] += wi;
        for (std::size_t j = 0; j < m; ++j) {
          if (outer[j]) acc.vh(i, j) += wi;
        }
      }
    } else {
      for (std::size_t j = 0; j < m; ++j) {
        acc.h[j] += w * inner[j];
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!outer[i]) continue;
        acc.v[i] += w;
        for (std::size_t j = 0; j < m; ++j) {
          acc.vh(i, j) += w * inner[j];
        }
      }
    }
  });
  rescale(1.0 / total);
  return acc;
}

double log_unnormalized_marginal(const RbmParams& p, std::span<const double> v) {
  const std::size_t n = p.visible_count();
  const std::size_t m = p.hidden_count();
  if (v.size() != n) {
    throw DimensionError("log_unnormalized_marginal: visible vector has wrong length");
  }
  double result = 0.0;
  RealVector act(p.hidden_bias);
  for (std::size_t i = 0; i < n; ++i) {
    result += p.visible_bias[i] * v[i];
    auto w = p.weights.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      act[j] += w[j] * v[i];
    }
  }
  for (double a : act) result += softplus(a);
  return result;
}

double log_likelihood(const RbmParams& p, std::span<const RealVector> data) {
  if (data.empty()) {
    throw std::invalid_argument("log_likelihood: empty data");
  }
  const double log_z = log_partition_exact(p);
  double sum = 0.0;
  for (const auto& item : data) {
    sum += log_unnormalized_marginal(p, item);
  }
  return sum / static_cast<double>(data.size()) - log_z;
}

}  // namespace dbnbench
