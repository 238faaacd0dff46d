#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pggat {

// splitmix64 finalizer; combines seeds into independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(a ^ mix_seed(b)); }

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Seeded generator with platform-stable draws (no std::distribution internals).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
  }

  template <typename T>
  void shuffle(std::vector<T>& xs) {
    for (int i = static_cast<int>(xs.size()) - 1; i > 0; --i) {
      int j = uniform_int(0, i);
      std::swap(xs[i], xs[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pggat
