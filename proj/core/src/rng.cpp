#include "rlqls/rng.hpp"

#include "rlqls/error.hpp"

namespace rlqls {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                          std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(master ^ splitmix64(fnv1a64(name)));
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

double Rng::uniform_open(double lo, double hi) {
  double u = 0.0;
  do {
    u = uniform();
  } while (u == 0.0);
  return lo + (hi - lo) * u;
}

std::uint64_t Rng::below(std::uint64_t n) {
  RLQLS_REQUIRE(n > 0, "Rng::below requires n > 0");
  // Rejection sampling on the largest multiple of n.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

}  // namespace rlqls
