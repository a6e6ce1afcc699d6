#include "lmsig/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lmsig {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo);
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % span);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double Rng::laplace(double scale) {
  const double u = uniform() - 0.5;
  const double mag = -std::log1p(-2.0 * std::abs(u));
  return u < 0.0 ? -scale * mag : scale * mag;
}

std::int64_t Rng::poisson(double lambda) {
  if (lambda <= 0.0) return 0;
  // A Poisson(lambda) variate is a sum of independent Poisson(lambda / m)
  // variates; chunks stay small enough for exact inversion.
  std::int64_t total = 0;
  while (lambda > 0.0) {
    const double chunk = std::min(lambda, 20.0);
    lambda -= chunk;
    double p = std::exp(-chunk);
    double cdf = p;
    const double u = uniform();
    std::int64_t k = 0;
    while (u > cdf && k < 200) {
      ++k;
      p *= chunk / static_cast<double>(k);
      cdf += p;
    }
    total += k;
  }
  return total;
}

}  // namespace lmsig
