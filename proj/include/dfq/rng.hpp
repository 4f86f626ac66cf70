#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "dfq/tensor.hpp"

namespace dfq {

/// All stochastic code takes an explicit Rng so that runs are reproducible
/// from a single seed. Sub-streams are derived with split(), never by
/// sharing one engine across unrelated components.
class Rng {
public:
  explicit Rng(uint64_t seed) : engine_(seed), state_mix_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    std::uniform_int_distribution<int64_t> d(lo, hi);
    return d(engine_);
  }

  /// k distinct values drawn uniformly from {0,...,n-1}.
  std::vector<int64_t> choice_without_replacement(int64_t n, int64_t k) {
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (int64_t i = 0; i < k; ++i) {
      int64_t j = uniform_int(i, n - 1);
      std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    pool.resize(static_cast<size_t>(k));
    return pool;
  }

  Tensor randn(std::vector<int64_t> shape, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(0.0, stddev);
    return t;
  }

  Tensor rand_uniform(std::vector<int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
  }

  /// Derived independent stream; splitmix-style mixing of the child index.
  Rng split(uint64_t stream) {
    uint64_t z = state_mix_ + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return Rng(z ^ (z >> 31));
  }

  std::mt19937_64& engine() { return engine_; }

  void reseed(uint64_t seed) {
    engine_.seed(seed);
    state_mix_ = seed;
  }

private:
  std::mt19937_64 engine_;
  uint64_t state_mix_ = 0;
};

}  // namespace dfq
