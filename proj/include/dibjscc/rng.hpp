#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace dibjscc {

// splitmix64 finalizer; used to mix seeds and tags into stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and a purpose tag so
// that distinct consumers (init, shuffling, channel noise, ...) never share a
// stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(master ^ mix64(h) ^ mix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Deterministic random source. All randomness in the project flows through
// this class; draw order is part of the reproducibility contract, so the
// Gaussian sampler is a fixed Box-Muller rather than the
// implementation-defined std::normal_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return (gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes two uniforms per pair.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t integer(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased for every n.
    std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = gen_();
      if (r >= threshold) return r % n;
    }
  }

  // Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dibjscc
