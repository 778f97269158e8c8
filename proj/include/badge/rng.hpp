#ifndef BADGE_RNG_HPP
#define BADGE_RNG_HPP

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>

namespace badge {

// Seeded generator with hand-rolled distribution transforms. std::mt19937_64
// is bit-reproducible across platforms but the std:: distributions are not,
// and fits must replay exactly under a fixed seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  // uniform on [0, 1) with 53-bit resolution
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer on [0, n)
  std::uint64_t below(std::uint64_t n) {
    assert(n > 0);
    const std::uint64_t block = UINT64_MAX / n;
    const std::uint64_t limit = block * n;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return r / block;
  }

  // Box-Muller; consumes exactly two raw draws per call
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // Marsaglia-Tsang squeeze; rate parameterization
  double gamma(double shape, double rate) {
    assert(shape > 0.0 && rate > 0.0);
    if (shape < 1.0) {
      const double u = 1.0 - uniform();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace badge

#endif  // BADGE_RNG_HPP
