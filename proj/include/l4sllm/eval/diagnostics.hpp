#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace l4sllm::eval {

struct DriftReport {
  std::vector<double> drift;  // V_{t+1} - V_t with V = (q - target)^2
  double mean_drift = 0.0;
  // Share of negative drifts among steps whose delay sits outside the band
  // |q_t - target| <= band; 1 when no step is outside.
  double fraction_negative = 1.0;
  std::size_t outside_band = 0;
};

// Needs at least two samples.
DriftReport lyapunov_drift(std::span<const double> qdelay, double target, double band = 0.0);

using BlockFn = std::function<std::vector<double>(const std::vector<double>&)>;

struct LipschitzReport {
  double estimate = 0.0;  // max ||F(h) - F(h')|| / ||h - h'||, a lower bound on L
  std::size_t pairs_used = 0;
  std::size_t skipped = 0;  // zero-distance pairs
  bool at_least_one = false;
};

LipschitzReport lipschitz_estimate(const BlockFn& f,
                                   const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs);

}  // namespace l4sllm::eval
