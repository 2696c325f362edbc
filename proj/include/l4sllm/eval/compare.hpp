#pragma once

#include <map>
#include <string>
#include <vector>

#include "l4sllm/eval/stats.hpp"

namespace l4sllm::eval {

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct SeriesDelta {
  double median_delta = 0.0;  // b - a
  double iqr_delta = 0.0;
  double mean_delta = 0.0;
  double ks = 0.0;
};

struct CompareReport {
  std::string driver_a;
  std::string driver_b;
  std::map<std::string, SeriesDelta> series;
  Cdf cdf_a;
  Cdf cdf_b;

  std::string to_json() const;
};

// Requires matching scenario hash and seed.
CompareReport compare(const EvalStats& a, const EvalStats& b);

}  // namespace l4sllm::eval
