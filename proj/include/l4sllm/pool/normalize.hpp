#pragma once

#include <span>

#include "l4sllm/pool/pool.hpp"

namespace l4sllm::pool {

// Mean/std per feature over the chosen trajectories (all when empty).
// Features with std below 1e-12 are flagged and later mapped to 0.
FeatureStats fit_feature_stats(const ExperiencePool& pool, std::span<const std::size_t> trajectory_ids = {});

StateVector normalize_state(const StateVector& raw, const FeatureStats& stats);
// Zero-variance features come back as their mean.
StateVector denormalize_state(const StateVector& normalized, const FeatureStats& stats);

// Returns a normalized copy carrying the stats; rejects an already
// normalized pool.
ExperiencePool normalize_states(const ExperiencePool& pool, const FeatureStats& stats);
ExperiencePool normalize_states(const ExperiencePool& pool);

}  // namespace l4sllm::pool
