#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "sagegan/tensor.hpp"

namespace sagegan {

/// FNV-1a used to derive stream-specific seeds from one user seed.
inline uint64_t mix_seed(uint64_t seed, std::string_view tag) {
  uint64_t h = 14695981039346656037ull ^ (seed * 0x9e3779b97f4a7c15ull);
  for (char c : tag) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

/// Seeded generator; every source of randomness in the pipeline goes
/// through one of these so runs are reproducible end to end.
class Rng {
public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  /// Independent child stream, deterministic in (seed, tag).
  Rng child(std::string_view tag) const { return Rng(mix_seed(seed_, tag)); }

  static Rng from(uint64_t seed, std::string_view tag) { return Rng(mix_seed(seed, tag)); }

  uint64_t seed() const { return seed_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(engine_);
  }

  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  template <typename T>
  Tensor<T> normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(normal(mean, stddev));
    return t;
  }

  template <typename T>
  Tensor<T> uniform_tensor(Shape shape, double lo, double hi) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(uniform(lo, hi));
    return t;
  }

  std::mt19937_64& engine() { return engine_; }

private:
  uint64_t seed_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace sagegan
