#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace rlqls {

/// Mixes a master seed, a stream name and a list of integer keys into an
/// independent 64-bit seed. Every stochastic component draws from its own
/// named stream so it can be replayed without the others.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                          std::initializer_list<std::uint64_t> keys = {});

std::uint64_t fnv1a64(std::string_view bytes);

/// Seeded 64-bit generator with platform-independent derived draws.
/// std::*_distribution output is implementation-defined, so the few
/// distributions we need are written out here.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view name,
      std::initializer_list<std::uint64_t> keys = {})
      : engine_(derive_seed(master, name, keys)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on the open interval (lo, hi).
  double uniform_open(double lo, double hi);

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// +1 or -1 with equal probability.
  int spin() { return (engine_() >> 63) ? 1 : -1; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rlqls
