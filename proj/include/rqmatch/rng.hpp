#pragma once

#include <cmath>
#include <cstdint>

namespace rqmatch {

// splitmix64: tiny, fully deterministic across platforms, cheap to fork.
// Every stochastic step in the project flows from one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible at 64-bit state.
  std::uint64_t below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(6.283185307179586 * u2);
    have_spare_ = true;
    return mean + stddev * r * std::cos(6.283185307179586 * u2);
  }

  // Independent child stream; tag keeps sibling forks decorrelated.
  Rng fork(std::uint64_t tag) {
    Rng child(state_ ^ (0xa0761d6478bd642full * (tag + 1)));
    child.next_u64();
    return child;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rqmatch
