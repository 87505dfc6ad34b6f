#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "fedrule/errors.hpp"

namespace fedrule {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

// Deterministic random stream. Every source of randomness in the pipeline is
// an RngStream derived from the single run seed via named sub-streams, so
// results are reproducible regardless of evaluation order or thread count.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed)
      : seed_(seed), engine_(detail::splitmix64(seed)) {}

  // Child stream keyed by (label, index); independent of draws consumed here.
  RngStream derive(std::string_view label, std::uint64_t index = 0) const {
    std::uint64_t h = detail::splitmix64(seed_ ^ detail::fnv1a64(label));
    h = detail::splitmix64(h + 0x9e3779b97f4a7c15ULL * (index + 1));
    return RngStream(h);
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching; u1 in (0, 1] keeps the log finite.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi() * u2);
  }

  double exponential(double rate) {
    if (!(rate > 0.0)) throw numeric_error("exponential rate must be > 0");
    return -std::log1p(-uniform()) / rate;
  }

  // Inverse-CDF transform: -scale*sign(u)*ln(1-2|u|), u uniform on (-0.5, 0.5).
  double laplace(double scale) {
    if (!(scale > 0.0)) throw numeric_error("laplace scale must be > 0");
    double u = uniform() - 0.5;
    while (u == -0.5) u = uniform() - 0.5;
    const double s = (u > 0.0) ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
    return -scale * s * std::log(1.0 - 2.0 * std::fabs(u));
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr double two_pi() { return 6.283185307179586476925286766559; }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace fedrule
