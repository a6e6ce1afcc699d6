#pragma once

#include <cstdint>
#include <random>

namespace lmsig {

/// SplitMix64 finalizer; used to derive independent per-subject / per-job
/// seeds from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Seeded random source with platform-independent output.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The standard distributions are not, so the transforms below are
/// written out explicitly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [lo, hi). Requires lo < hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double laplace(double scale);
  std::int64_t poisson(double lambda);

  /// Index drawn from unnormalized nonnegative weights.
  template <class Range>
  std::size_t categorical(const Range& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    std::size_t i = 0;
    for (double w : weights) {
      if (u < w) return i;
      u -= w;
      ++i;
    }
    return i - 1;
  }

  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::int64_t>(last - first);
    for (std::int64_t i = n - 1; i > 0; --i) {
      const auto j = uniform_int(0, i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lmsig
