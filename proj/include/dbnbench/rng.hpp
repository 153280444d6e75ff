#pragma once

#include <cstdint>
#include <limits>

namespace dbnbench {

/// splitmix64 output function. Bijective, so distinct inputs give distinct
/// outputs; used both as a seed mixer and as a counter-based generator.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for sub-stream `stream` of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
  return derive_seed(derive_seed(seed, a), b);
}

/// Top 53 bits of `bits` mapped to [0, 1).
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// The `counter`-th uniform of the stream keyed by `key`. Stateless, so loops
/// over many independent streams vectorize.
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
  return to_unit(mix64(key + counter * 0x9E3779B97F4A7C15ULL));
}

/// Sequential splitmix64 stream. Satisfies UniformRandomBitGenerator so it
/// plugs into std::shuffle, std::sample and the <random> distributions.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + (counter_++) * 0x9E3779B97F4A7C15ULL); }

  double uniform() noexcept { return to_unit((*this)()); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dbnbench
