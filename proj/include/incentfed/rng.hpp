#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace incentfed::rng {

// splitmix64 finalizer (Stafford mix13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Counter-based deterministic stream.
//
// The i-th raw output is mix64(key + (i+1)*golden), i.e. splitmix64 run in
// counter mode, so draws are a pure function of (key, i) and support random
// access. The key is derived by absorbing (seed, purpose tag, client id,
// round) through the same mixer, which gives independent streams per tuple:
// results cannot depend on which thread or in which order a stream is
// consumed, only on its key and how many values were taken from it.
class Stream {
 public:
  Stream(std::uint64_t seed, std::string_view tag, std::uint64_t client = 0,
         std::uint64_t round = 0) noexcept {
    std::uint64_t k = mix64(seed + kGolden);
    k = mix64(k ^ (fnv1a(tag) + kGolden));
    k = mix64(k ^ (client + kGolden));
    k = mix64(k ^ (round + kGolden));
    key_ = k;
  }

  std::uint64_t next_u64() noexcept {
    counter_ += 1;
    return mix64(key_ + counter_ * kGolden);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  // Unbiased integer in [0, n); modulo rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
    std::uint64_t x, r;
    do {
      x = next_u64();
      r = x % n;
    } while (x - r > std::numeric_limits<std::uint64_t>::max() - n + 1);
    return r;
  }

  // Standard normal, Box-Muller with cached spare.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  // Gamma(alpha, 1), Marsaglia-Tsang; alpha < 1 via the boost
  // Gamma(alpha) = Gamma(alpha + 1) * U^{1/alpha}.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("gamma: alpha must be > 0");
    if (alpha < 1.0) {
      double u = 1.0 - uniform();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// First `take` entries of a stream-driven partial Fisher-Yates shuffle of
// {0, ..., pool-1}: a uniform sample without replacement.
inline std::vector<int> sample_without_replacement(int pool, int take,
                                                   Stream& stream) {
  if (take < 0 || take > pool)
    throw std::invalid_argument("sample_without_replacement: take out of range");
  std::vector<int> idx(static_cast<std::size_t>(pool));
  for (int i = 0; i < pool; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int j = 0; j < take; ++j) {
    int swap_at =
        j + static_cast<int>(stream.uniform_below(static_cast<std::uint64_t>(pool - j)));
    std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(swap_at)]);
  }
  idx.resize(static_cast<std::size_t>(take));
  return idx;
}

}  // namespace incentfed::rng
