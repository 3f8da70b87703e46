#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <torch/types.h>

namespace dvd {

/// Seeded engine used for every stochastic choice in the pipeline. The full
/// state (engine plus cached normal deviate) round-trips through
/// save_state/load_state so runs can resume bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0);
  int uniform_int(int lo, int hi);  // inclusive
  double normal();

  /// Standard-normal float tensor of the given shape.
  torch::Tensor normal_tensor(at::IntArrayRef shape);

  /// Child seed for an independent stream.
  std::uint64_t split() { return engine_(); }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stable 64-bit seed derivation (splitmix64 of the pair).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace dvd
