#include "l4sllm/pool/augment.hpp"

#include <algorithm>
#include <random>

namespace l4sllm::pool {

void AugmentRules::validate() const {
  if (jitter_range < 0) throw PoolError("augment: jitter range must be >= 0");
  for (double s : noise_sigma) {
    if (!(s >= 0.0)) throw PoolError("augment: noise sigma must be >= 0");
  }
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) throw PoolError("augment: dropout probability must lie in [0, 1]");
}

ExperiencePool augment(const ExperiencePool& pool, const AugmentRules& rules) {
  rules.validate();
  ExperiencePool out = pool;
  std::mt19937_64 rng(rules.seed);
  std::uniform_int_distribution<int> offset(-rules.jitter_range, rules.jitter_range);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t ti = 0; ti < pool.trajectories.size(); ++ti) {
    const auto& src = pool.trajectories[ti].steps;
    auto& dst = out.trajectories[ti].steps;
    const auto n = static_cast<long>(src.size());
    for (long i = 0; i < n; ++i) {
      Step& s = dst[static_cast<std::size_t>(i)];
      if (rules.jitter_range > 0) {
        const long j = std::clamp<long>(i + offset(rng), 0, n - 1);
        s.state = src[static_cast<std::size_t>(j)].state;
      }
      for (std::size_t f = 0; f < kStateDim; ++f) {
        if (rules.noise_sigma[f] > 0.0) s.state[f] += rules.noise_sigma[f] * normal(rng);
      }
      if (rules.dropout_prob > 0.0 && unit(rng) < rules.dropout_prob) s.masked = true;
      s.augmented = true;
    }
    out.trajectories[ti].source += "#aug";
  }
  return out;
}

}  // namespace l4sllm::pool
