#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "getral/matrix.hpp"

namespace getral {

/// Seeded deterministic generator: 64-bit Mersenne Twister (std::mt19937_64),
/// whose output sequence is fixed by the C++ standard. Real-valued draws are
/// derived from the top 53 bits, so they do not depend on the library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Requires n > 0.
  std::size_t index(std::size_t n);
  double normal();

  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[index(i)]);
  }

  /// Independent child stream, used to partition draws by purpose.
  Rng fork(std::uint64_t salt);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace getral
