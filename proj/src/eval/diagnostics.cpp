#include "l4sllm/eval/diagnostics.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace l4sllm::eval {

DriftReport lyapunov_drift(std::span<const double> q, double target, double band) {
  if (q.size() < 2) throw std::invalid_argument("lyapunov_drift: trace needs at least two samples");
  DriftReport r;
  std::size_t negative = 0;
  for (std::size_t t = 0; t + 1 < q.size(); ++t) {
    const double v0 = (q[t] - target) * (q[t] - target);
    const double v1 = (q[t + 1] - target) * (q[t + 1] - target);
    r.drift.push_back(v1 - v0);
    if (std::abs(q[t] - target) > band) {
      ++r.outside_band;
      negative += v1 - v0 < 0.0 ? 1 : 0;
    }
  }
  r.mean_drift = std::accumulate(r.drift.begin(), r.drift.end(), 0.0) / static_cast<double>(r.drift.size());
  r.fraction_negative = r.outside_band ? static_cast<double>(negative) / static_cast<double>(r.outside_band) : 1.0;
  return r;
}

namespace {
double distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("lipschitz: vector sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}
}  // namespace

LipschitzReport lipschitz_estimate(const BlockFn& f,
                                   const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs) {
  LipschitzReport r;
  for (const auto& [h, h2] : pairs) {
    const double dx = distance(h, h2);
    if (dx == 0.0) {
      ++r.skipped;
      continue;
    }
    const double dy = distance(f(h), f(h2));
    r.estimate = std::max(r.estimate, dy / dx);
    ++r.pairs_used;
  }
  r.at_least_one = r.estimate >= 1.0;
  return r;
}

}  // namespace l4sllm::eval
