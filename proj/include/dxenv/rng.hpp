#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace dxenv {

/// Seeded random stream with platform-stable derived draws.
///
/// The standard distributions are implementation-defined, so every draw the
/// simulator depends on for reproducibility goes through these helpers
/// instead. Child streams are derived by label so that, e.g., persona
/// sampling and noise sampling do not perturb each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform01();
  bool bernoulli(double p);
  /// Standard normal via Box-Muller.
  double normal(double mean = 0.0, double stddev = 1.0);

  /// k distinct indices from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

  Rng fork(std::string_view label) const;

  // UniformRandomBitGenerator, for interop with <algorithm>.
  using result_type = std::uint64_t;
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace dxenv
