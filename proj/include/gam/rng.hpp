// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace gam {

// splitmix64 step; used to derive independent child seeds from a base seed.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
  uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// mt19937_64 with hand-rolled draw helpers. The standard pins the raw
// engine sequence but not the <random> distributions, so the helpers here
// keep runs bit-reproducible across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive, rejection-sampled so there is
  // no modulo bias.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t r = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t lim = UINT64_MAX - UINT64_MAX % r;
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= lim);
    return lo + static_cast<int64_t>(v % r);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  Rng fork(uint64_t stream) { return Rng(derive_seed(next_u64(), stream)); }

 private:
  std::mt19937_64 eng_;
};

}  // namespace gam
