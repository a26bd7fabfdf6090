#include "lmolab/random.hpp"

#include "lmolab/error.hpp"

namespace lmolab {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  return splitmix64(splitmix64(seed) ^ fnv1a(name));
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return splitmix64(substream_seed(seed, name) + splitmix64(index + 1));
}

std::size_t Rng::index(std::size_t n) {
  require(n > 0, ErrorKind::kInvalidParameter, "Rng::index: empty range");
  // Rejection sampling keeps the draw exactly uniform and portable.
  const std::uint64_t limit = engine_.max() - (engine_.max() % n + 1) % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x > limit);
  return static_cast<std::size_t>(x % n);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * normal();
  return m;
}

Vector Rng::normal_vector(std::size_t dim, double stddev) {
  Vector v(dim);
  for (double& x : v.values()) x = stddev * normal();
  return v;
}

}  // namespace lmolab
