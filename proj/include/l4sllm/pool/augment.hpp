#pragma once

#include <array>
#include <cstdint>

#include "l4sllm/pool/pool.hpp"

namespace l4sllm::pool {

struct AugmentRules {
  // Each step takes the state of a neighbor up to this many steps away.
  int jitter_range = 0;
  // Per-feature Gaussian noise added to states.
  std::array<double, kStateDim> noise_sigma{};
  // Probability that a step's time index is masked.
  double dropout_prob = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
};

// Returns a perturbed copy; rewards, actions and returns are untouched and
// every step of the copy is flagged as augmented.
ExperiencePool augment(const ExperiencePool& pool, const AugmentRules& rules);

}  // namespace l4sllm::pool
