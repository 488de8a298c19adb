#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "trajdiff/tensor.hpp"

namespace trajdiff {

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded random stream. Draw order is fixed by the caller, so identical seeds
// and call sequences give bit-identical results.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  // Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(engine_); }

  Tensor normal_tensor(Shape shape);

  Rng split(std::uint64_t stream) { return Rng(mix_seed(engine_(), stream)); }

  // Full engine + distribution state as text, for checkpointing a TrainState.
  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace trajdiff
