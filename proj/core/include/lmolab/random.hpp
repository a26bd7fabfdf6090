#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "lmolab/linalg.hpp"

namespace lmolab {

/// Derives an independent seed for the named substream of `seed`. All
/// randomness in the lab flows from a root seed through these names.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view stream) : engine_(substream_seed(seed, stream)) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return normal_(engine_); }
  double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev = 1.0);
  Vector normal_vector(std::size_t dim, double stddev = 1.0);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    // Fisher-Yates with our own index draw so the permutation only depends
    // on the engine, not on the standard library's shuffle.
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace lmolab
