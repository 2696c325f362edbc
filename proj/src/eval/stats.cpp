#include "l4sllm/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace l4sllm::eval {

using nlohmann::json;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty series");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::vector<double> v) {
  Summary s;
  s.count = v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.min = v.front();
  s.max = v.back();
  s.q1 = quantile_sorted(v, 0.25);
  s.median = quantile_sorted(v, 0.5);
  s.q3 = quantile_sorted(v, 0.75);
  s.iqr = s.q3 - s.q1;
  const double lo = s.q1 - 1.5 * s.iqr;
  const double hi = s.q3 + 1.5 * s.iqr;
  s.whisker_low = *std::lower_bound(v.begin(), v.end(), lo);
  s.whisker_high = *(std::upper_bound(v.begin(), v.end(), hi) - 1);
  for (double x : v) s.outliers += (x < lo || x > hi) ? 1 : 0;
  return s;
}

Cdf empirical_cdf(std::vector<double> v, std::size_t max_points) {
  Cdf c;
  if (v.empty()) return c;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t points = std::max<std::size_t>(1, std::min(n, max_points));
  for (std::size_t k = 1; k <= points; ++k) {
    const std::size_t rank = (k * n + points - 1) / points;  // 1..n
    c.x.push_back(v[rank - 1]);
    c.y.push_back(static_cast<double>(rank) / static_cast<double>(n));
  }
  return c;
}

EvalStats compute_stats(const sim::RunTrace& trace, const sim::ScenarioConfig& scenario, sim::Micros steady_start) {
  EvalStats st;
  auto& agg = st.series["qdelay"];
  auto& classic = st.series["qdelay_classic"];
  auto& l4s = st.series["qdelay_l4s"];
  for (const sim::SojournSample& s : trace.sojourns) {
    if (s.at < steady_start) continue;
    const double ms = static_cast<double>(s.sojourn) / 1000.0;
    agg.push_back(ms);
    (s.queue == sim::QueueClass::L4S ? l4s : classic).push_back(ms);
  }
  auto& util = st.series["util"];
  const double bin_s = static_cast<double>(trace.util_bin) / 1e6;
  for (std::size_t i = 0; i < trace.delivered_bytes.size(); ++i) {
    const auto start = static_cast<sim::Micros>(i) * trace.util_bin;
    if (start < steady_start || start + trace.util_bin > scenario.duration) continue;
    util.push_back(static_cast<double>(trace.delivered_bytes[i]) * 8.0 / bin_s / scenario.aqm.link_rate_bps);
  }
  for (const auto& [name, values] : st.series) st.summary[name] = summarize(values);
  st.cdf = empirical_cdf(agg);
  st.counts.decisions = trace.decisions;
  st.counts.enqueues = trace.action_counts[0];
  st.counts.drops = trace.action_counts[1];
  st.counts.marks = trace.action_counts[2];
  st.counts.forced_drops = trace.forced_drops;
  st.counts.policy_violations = trace.policy_violations;
  std::ostringstream h;
  h << std::hex << std::setw(16) << std::setfill('0') << sim::scenario_hash(scenario);
  st.header.scenario = scenario.name;
  st.header.scenario_hash = h.str();
  st.header.seed = scenario.seed;
  return st;
}

namespace {

json summary_json(const Summary& s) {
  return {{"count", s.count},   {"mean", s.mean},         {"min", s.min},
          {"q1", s.q1},         {"median", s.median},     {"q3", s.q3},
          {"max", s.max},       {"iqr", s.iqr},           {"whisker_low", s.whisker_low},
          {"whisker_high", s.whisker_high}, {"outliers", s.outliers}};
}

Summary summary_from(const json& j) {
  Summary s;
  s.count = j.at("count").get<std::size_t>();
  s.mean = j.at("mean").get<double>();
  s.min = j.at("min").get<double>();
  s.q1 = j.at("q1").get<double>();
  s.median = j.at("median").get<double>();
  s.q3 = j.at("q3").get<double>();
  s.max = j.at("max").get<double>();
  s.iqr = j.at("iqr").get<double>();
  s.whisker_low = j.at("whisker_low").get<double>();
  s.whisker_high = j.at("whisker_high").get<double>();
  s.outliers = j.at("outliers").get<std::size_t>();
  return s;
}

}  // namespace

std::string EvalStats::to_json() const {
  json j;
  j["header"] = {{"ckpt_hash", header.ckpt_hash},
                 {"scenario", header.scenario},
                 {"scenario_hash", header.scenario_hash},
                 {"seed", header.seed},
                 {"driver", header.driver}};
  j["series"] = series;
  json sums = json::object();
  for (const auto& [name, s] : summary) sums[name] = summary_json(s);
  sums["latency_s"] = summary_json(summarize(latency_s));
  j["summary"] = sums;
  j["cdf"] = {{"x", cdf.x}, {"y", cdf.y}};
  j["latency_s"] = latency_s;
  j["counts"] = {{"decisions", counts.decisions},
                 {"enqueues", counts.enqueues},
                 {"drops", counts.drops},
                 {"marks", counts.marks},
                 {"forced_drops", counts.forced_drops},
                 {"policy_violations", counts.policy_violations},
                 {"inferences", counts.inferences},
                 {"model_overrides", counts.model_overrides}};
  return j.dump();
}

EvalStats EvalStats::from_json(const std::string& text) {
  EvalStats st;
  try {
    const json j = json::parse(text);
    const json& h = j.at("header");
    st.header.ckpt_hash = h.at("ckpt_hash").get<std::string>();
    st.header.scenario = h.at("scenario").get<std::string>();
    st.header.scenario_hash = h.at("scenario_hash").get<std::string>();
    st.header.seed = h.at("seed").get<std::uint64_t>();
    st.header.driver = h.at("driver").get<std::string>();
    st.series = j.at("series").get<std::map<std::string, std::vector<double>>>();
    for (const auto& [name, s] : j.at("summary").items()) {
      if (name != "latency_s") st.summary[name] = summary_from(s);
    }
    st.cdf.x = j.at("cdf").at("x").get<std::vector<double>>();
    st.cdf.y = j.at("cdf").at("y").get<std::vector<double>>();
    st.latency_s = j.value("latency_s", std::vector<double>{});
    const json& c = j.at("counts");
    st.counts.decisions = c.at("decisions").get<std::uint64_t>();
    st.counts.enqueues = c.at("enqueues").get<std::uint64_t>();
    st.counts.drops = c.at("drops").get<std::uint64_t>();
    st.counts.marks = c.at("marks").get<std::uint64_t>();
    st.counts.forced_drops = c.at("forced_drops").get<std::uint64_t>();
    st.counts.policy_violations = c.at("policy_violations").get<std::uint64_t>();
    st.counts.inferences = c.at("inferences").get<std::uint64_t>();
    st.counts.model_overrides = c.at("model_overrides").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("stats: schema error: ") + e.what());
  }
  return st;
}

void save_stats(const std::string& path, const EvalStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write stats '" + path + "'");
  out << stats.to_json() << '\n';
}

EvalStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stats '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return EvalStats::from_json(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

}  // namespace l4sllm::eval
