#include "l4sllm/pool/normalize.hpp"

#include <cmath>
#include <numeric>

namespace l4sllm::pool {

namespace {
constexpr double kMinStd = 1e-12;
}

FeatureStats fit_feature_stats(const ExperiencePool& pool, std::span<const std::size_t> trajectory_ids) {
  std::vector<std::size_t> ids(trajectory_ids.begin(), trajectory_ids.end());
  if (ids.empty()) {
    ids.resize(pool.trajectories.size());
    std::iota(ids.begin(), ids.end(), 0);
  }
  FeatureStats st;
  std::array<double, kStateDim> sum{};
  std::size_t n = 0;
  double r_sq = 0.0;
  for (std::size_t id : ids) {
    if (id >= pool.trajectories.size()) throw PoolError("normalize: trajectory index out of range");
    for (const Step& s : pool.trajectories[id].steps) {
      for (std::size_t f = 0; f < kStateDim; ++f) sum[f] += s.state[f];
      r_sq += s.return_to_go * s.return_to_go;
      ++n;
    }
  }
  if (n == 0) throw PoolError("normalize: pool has no steps");
  for (std::size_t f = 0; f < kStateDim; ++f) st.mean[f] = sum[f] / static_cast<double>(n);
  std::array<double, kStateDim> sq{};
  for (std::size_t id : ids) {
    for (const Step& s : pool.trajectories[id].steps) {
      for (std::size_t f = 0; f < kStateDim; ++f) {
        const double d = s.state[f] - st.mean[f];
        sq[f] += d * d;
      }
    }
  }
  for (std::size_t f = 0; f < kStateDim; ++f) {
    st.stddev[f] = std::sqrt(sq[f] / static_cast<double>(n));
    st.zero_variance[f] = st.stddev[f] < kMinStd;
  }
  const double rms = std::sqrt(r_sq / static_cast<double>(n));
  st.return_scale = rms > 0.0 ? rms : 1.0;
  st.fitted = true;
  return st;
}

StateVector normalize_state(const StateVector& raw, const FeatureStats& stats) {
  StateVector out{};
  for (std::size_t f = 0; f < kStateDim; ++f) {
    out[f] = stats.zero_variance[f] ? 0.0 : (raw[f] - stats.mean[f]) / stats.stddev[f];
  }
  return out;
}

StateVector denormalize_state(const StateVector& normalized, const FeatureStats& stats) {
  StateVector out{};
  for (std::size_t f = 0; f < kStateDim; ++f) {
    out[f] = stats.zero_variance[f] ? stats.mean[f] : normalized[f] * stats.stddev[f] + stats.mean[f];
  }
  return out;
}

ExperiencePool normalize_states(const ExperiencePool& pool, const FeatureStats& stats) {
  if (pool.normalized) throw PoolError("normalize: pool is already normalized");
  if (!stats.fitted) throw PoolError("normalize: stats were never fitted");
  ExperiencePool out = pool;
  for (Trajectory& t : out.trajectories) {
    for (Step& s : t.steps) s.state = normalize_state(s.state, stats);
  }
  out.feature_stats = stats;
  out.normalized = true;
  return out;
}

ExperiencePool normalize_states(const ExperiencePool& pool) {
  if (pool.step_count() == 0) throw PoolError("normalize: pool has no steps");
  return normalize_states(pool, fit_feature_stats(pool));
}

}  // namespace l4sllm::pool
