#pragma once

#include <cstdint>

namespace kfprop {

// Counter-based deterministic generator. Every draw is
// splitmix64_finalize(seed + k * GOLDEN) for the k-th draw, so streams are
// reproducible across platforms and independent of call order elsewhere.
// split(tag) derives a child stream whose seed mixes in the tag; children
// with distinct tags are statistically independent of the parent and of
// each other.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), counter_(0) {}

  Rng split(std::uint64_t tag) const { return Rng(derive(tag)); }

  // Seed of the child stream, for APIs that take a plain seed.
  std::uint64_t derive(std::uint64_t tag) const {
    return finalize(seed_ ^ finalize(tag + kTagSalt));
  }

  std::uint64_t next_u64() { return finalize(seed_ + (++counter_) * kGolden); }

  // Uniform in [0,1) with 53 bits of mantissa; the scale constant is an
  // exact power of two so the result is platform independent.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

  // Irwin-Hall(12) approximation to a standard normal, resampled until the
  // draw lands in [-2,2], then scaled. Uses only adds and compares so the
  // data-generation path stays free of libm.
  double trunc_normal(double stddev) {
    for (;;) {
      double s = 0.0;
      for (int i = 0; i < 12; ++i) s += uniform();
      double z = s - 6.0;
      if (z >= -2.0 && z <= 2.0) return z * stddev;
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kTagSalt = 0xd1b54a32d192ed03ULL;

  static std::uint64_t finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace kfprop
