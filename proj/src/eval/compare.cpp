#include "l4sllm/eval/compare.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <stdexcept>

namespace l4sllm::eval {

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks: both samples must be nonempty");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

CompareReport compare(const EvalStats& a, const EvalStats& b) {
  if (a.header.scenario_hash != b.header.scenario_hash || a.header.seed != b.header.seed) {
    throw std::invalid_argument("compare: stats come from different scenarios (" + a.header.scenario + "/" +
                                std::to_string(a.header.seed) + " vs " + b.header.scenario + "/" +
                                std::to_string(b.header.seed) + ")");
  }
  CompareReport r;
  r.driver_a = a.header.driver;
  r.driver_b = b.header.driver;
  for (const auto& [name, va] : a.series) {
    const auto it = b.series.find(name);
    if (it == b.series.end() || va.empty() || it->second.empty()) continue;
    SeriesDelta d;
    const Summary sa = summarize(va);
    const Summary sb = summarize(it->second);
    d.median_delta = sb.median - sa.median;
    d.iqr_delta = sb.iqr - sa.iqr;
    d.mean_delta = sb.mean - sa.mean;
    d.ks = ks_statistic(va, it->second);
    r.series[name] = d;
  }
  r.cdf_a = a.cdf;
  r.cdf_b = b.cdf;
  return r;
}

std::string CompareReport::to_json() const {
  nlohmann::json j;
  j["driver_a"] = driver_a;
  j["driver_b"] = driver_b;
  for (const auto& [name, d] : series) {
    j["series"][name] = {{"median_delta", d.median_delta},
                         {"iqr_delta", d.iqr_delta},
                         {"mean_delta", d.mean_delta},
                         {"ks", d.ks}};
  }
  j["cdf_a"] = {{"x", cdf_a.x}, {"y", cdf_a.y}};
  j["cdf_b"] = {{"x", cdf_b.x}, {"y", cdf_b.y}};
  return j.dump(2);
}

}  // namespace l4sllm::eval
