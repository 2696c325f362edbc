#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "l4sllm/sim/scenario.hpp"
#include "l4sllm/sim/simulator.hpp"

namespace l4sllm::eval {

// Box-plot summary with Tukey whiskers (1.5 IQR, clamped to the data).
struct Summary {
  std::size_t count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  double iqr = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::size_t outliers = 0;
};

// Linear-interpolated quantile of sorted data, q in [0, 1].
double quantile_sorted(const std::vector<double>& sorted, double q);
Summary summarize(std::vector<double> values);

struct Cdf {
  std::vector<double> x;
  std::vector<double> y;
};
// Step CDF at up to max_points evenly spaced ranks; y ends at 1.
Cdf empirical_cdf(std::vector<double> values, std::size_t max_points = 200);

struct StatsHeader {
  std::string ckpt_hash;  // hex, empty for rule-based runs
  std::string scenario;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  std::string driver;
};

struct EvalCounts {
  std::uint64_t decisions = 0;
  std::uint64_t enqueues = 0;
  std::uint64_t drops = 0;
  std::uint64_t marks = 0;
  std::uint64_t forced_drops = 0;
  std::uint64_t policy_violations = 0;
  std::uint64_t inferences = 0;
  std::uint64_t model_overrides = 0;
};

struct EvalStats {
  StatsHeader header;
  // Queue delay in ms per dequeued packet (steady state); per queue and pooled.
  std::map<std::string, std::vector<double>> series;
  std::map<std::string, Summary> summary;
  Cdf cdf;  // of the aggregate queue delay
  std::vector<double> latency_s;
  EvalCounts counts;

  std::string to_json() const;
  static EvalStats from_json(const std::string& text);
};

// Series "qdelay", "qdelay_classic", "qdelay_l4s" (ms) and "util" (fraction of
// link rate per bin), all from t >= steady_start.
EvalStats compute_stats(const sim::RunTrace& trace, const sim::ScenarioConfig& scenario, sim::Micros steady_start);

void save_stats(const std::string& path, const EvalStats& stats);
EvalStats load_stats(const std::string& path);

}  // namespace l4sllm::eval
