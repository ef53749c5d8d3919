#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace cdet {

// SplitMix64 stream with hand-rolled distributions. std::mt19937 plus the
// standard distributions are implementation-defined, which would break the
// byte-identical-dataset contract across toolchains; this generator produces
// the same sequence everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive. Uses rejection to stay unbiased.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; caches the second draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = uniform_int(0, i);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace detail {
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ull) {
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}
inline std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 0x100000001B3ull;
  }
  return h;
}
}  // namespace detail

// Root of the reproducibility tree. Every stochastic component draws from a
// child stream keyed by a purpose tag (and optional indices), so adding or
// reordering consumers does not perturb unrelated streams.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Rng stream(std::string_view tag) const {
    return Rng(detail::fnv1a_u64(seed_, detail::fnv1a(tag)));
  }
  Rng stream(std::string_view tag, std::uint64_t a) const {
    return Rng(detail::fnv1a_u64(a, detail::fnv1a_u64(seed_, detail::fnv1a(tag))));
  }
  Rng stream(std::string_view tag, std::uint64_t a, std::uint64_t b) const {
    return Rng(detail::fnv1a_u64(b, detail::fnv1a_u64(a, detail::fnv1a_u64(seed_, detail::fnv1a(tag)))));
  }

 private:
  std::uint64_t seed_;
};

inline RngState seed_all(std::uint64_t seed) { return RngState(seed); }

}  // namespace cdet
