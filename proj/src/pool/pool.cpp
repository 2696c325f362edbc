#include "l4sllm/pool/pool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace l4sllm::pool {

using nlohmann::json;

std::size_t ExperiencePool::step_count() const {
  std::size_t n = 0;
  for (const Trajectory& t : trajectories) n += t.steps.size();
  return n;
}

void ExperiencePool::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw PoolError("pool: gamma must lie in [0, 1]");
  if (trajectories.empty()) throw PoolError("pool: no trajectories");
  for (std::size_t ti = 0; ti < trajectories.size(); ++ti) {
    const auto& steps = trajectories[ti].steps;
    const std::string where = "pool: trajectory " + std::to_string(ti);
    if (steps.empty()) throw PoolError(where + " is empty");
    double next = 0.0;
    for (std::size_t i = steps.size(); i-- > 0;) {
      const Step& s = steps[i];
      const std::string at = where + " step " + std::to_string(i);
      if (s.done != (i + 1 == steps.size())) throw PoolError(at + ": done flag must be set on the last step only");
      if (s.action < 0 || s.action > 2) throw PoolError(at + ": action out of range");
      if (!(s.reward > 0.0) || !std::isfinite(s.reward)) throw PoolError(at + ": reward must be finite and > 0");
      for (double v : s.state) {
        if (!std::isfinite(v)) throw PoolError(at + ": non-finite state value");
      }
      const double expect = s.done ? s.reward : s.reward + gamma * next;
      if (std::abs(expect - s.return_to_go) > 1e-9 * std::max(1.0, std::abs(expect))) {
        throw PoolError(at + ": return-to-go disagrees with rewards");
      }
      next = s.return_to_go;
    }
  }
}

double compute_reward(double packet_length, double queue_delay_ms) {
  if (!(packet_length > 0.0)) throw PoolError("reward: packet length must be > 0");
  if (!(queue_delay_ms >= 0.0)) throw PoolError("reward: queue delay must be >= 0");
  return packet_length / (queue_delay_ms + 1.0);
}

std::vector<double> returns_to_go(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw PoolError("returns_to_go: empty reward sequence");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw PoolError("returns_to_go: gamma must lie in [0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + (i + 1 == rewards.size() ? 0.0 : gamma * acc);
    out[i] = acc;
  }
  return out;
}

Trajectory build_trajectory(const std::vector<sim::KernelLogRecord>& records, const BuildOptions& options,
                            const std::string& source) {
  if (records.empty()) throw PoolError("build_pool: empty log" + (source.empty() ? "" : " '" + source + "'"));
  Trajectory t;
  t.source = source;
  t.steps.resize(records.size());
  StateExtractor extractor;
  std::vector<double> rewards(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    Step& s = t.steps[i];
    s.state = extractor.extract(r);
    s.action = static_cast<int>(r.dequeue_action);
    // Integer milliseconds.
    const double own_ms = static_cast<double>(r.current_queue_delay / 1000);
    if (options.reward == RewardMode::DelayPlusOne) {
      rewards[i] = compute_reward(static_cast<double>(r.packet_length), own_ms);
    } else {
      const auto& nx = i + 1 < records.size() ? records[i + 1] : r;
      const double next_ms = static_cast<double>(nx.current_queue_delay / 1000);
      rewards[i] = static_cast<double>(r.packet_length) / std::max(next_ms, 1.0);
    }
    s.reward = rewards[i];
  }
  const auto R = returns_to_go(rewards, options.gamma);
  for (std::size_t i = 0; i < records.size(); ++i) t.steps[i].return_to_go = R[i];
  t.steps.back().done = true;
  return t;
}

ExperiencePool build_pool(std::vector<std::string> log_files, const BuildOptions& options) {
  if (log_files.empty()) throw PoolError("build_pool: no log files");
  std::sort(log_files.begin(), log_files.end());
  ExperiencePool pool;
  pool.gamma = options.gamma;
  for (const std::string& file : log_files) {
    pool.trajectories.push_back(build_trajectory(sim::read_klog_file(file), options, file));
    pool.provenance.sources.push_back(file);
  }
  pool.validate();
  return pool;
}

namespace {

json stats_to_json(const FeatureStats& s) {
  return {{"mean", s.mean},
          {"std", s.stddev},
          {"zero_variance", s.zero_variance},
          {"return_scale", s.return_scale},
          {"fitted", s.fitted}};
}

FeatureStats stats_from_json(const json& j) {
  FeatureStats s;
  s.mean = j.at("mean").get<std::array<double, kStateDim>>();
  s.stddev = j.at("std").get<std::array<double, kStateDim>>();
  s.zero_variance = j.at("zero_variance").get<std::array<bool, kStateDim>>();
  s.return_scale = j.at("return_scale").get<double>();
  s.fitted = j.at("fitted").get<bool>();
  return s;
}

}  // namespace

void write_pool(std::ostream& out, const ExperiencePool& pool) {
  json j;
  j["format"] = "l4sllm-pool";
  j["version"] = 1;
  j["gamma"] = pool.gamma;
  j["normalized"] = pool.normalized;
  j["state_features"] = json::array();
  for (auto name : feature_names()) j["state_features"].push_back(std::string(name));
  j["feature_stats"] = stats_to_json(pool.feature_stats);
  j["provenance"] = {{"sources", pool.provenance.sources},
                     {"seed", pool.provenance.seed},
                     {"config_hash", pool.provenance.config_hash}};
  json trajs = json::array();
  for (const Trajectory& t : pool.trajectories) {
    json steps = json::array();
    for (const Step& s : t.steps) {
      json js = {{"r", s.reward}, {"s", s.state}, {"a", s.action}, {"done", s.done ? 1 : 0}, {"R", s.return_to_go}};
      if (s.augmented) js["aug"] = 1;
      if (s.masked) js["mask"] = 1;
      steps.push_back(std::move(js));
    }
    trajs.push_back({{"source", t.source}, {"steps", std::move(steps)}});
  }
  j["trajectories"] = std::move(trajs);
  out << j.dump() << '\n';
}

ExperiencePool read_pool(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw PoolError(std::string("pool: invalid JSON: ") + e.what());
  }
  ExperiencePool pool;
  try {
    if (j.value("format", std::string()) != "l4sllm-pool") throw PoolError("pool: not a pool file");
    if (j.at("version").get<int>() != 1) throw PoolError("pool: unsupported version");
    const auto names = j.at("state_features").get<std::vector<std::string>>();
    if (names.size() != kStateDim) throw PoolError("pool: state width mismatch");
    for (std::size_t i = 0; i < kStateDim; ++i) {
      if (names[i] != feature_names()[i]) throw PoolError("pool: state feature order mismatch at " + names[i]);
    }
    pool.gamma = j.at("gamma").get<double>();
    pool.normalized = j.at("normalized").get<bool>();
    pool.feature_stats = stats_from_json(j.at("feature_stats"));
    const json& prov = j.at("provenance");
    pool.provenance.sources = prov.at("sources").get<std::vector<std::string>>();
    pool.provenance.seed = prov.at("seed").get<std::uint64_t>();
    pool.provenance.config_hash = prov.at("config_hash").get<std::string>();
    for (const json& jt : j.at("trajectories")) {
      Trajectory t;
      t.source = jt.value("source", std::string());
      for (const json& js : jt.at("steps")) {
        Step s;
        s.reward = js.at("r").get<double>();
        s.state = js.at("s").get<StateVector>();
        s.action = js.at("a").get<int>();
        s.done = js.at("done").get<int>() != 0;
        s.return_to_go = js.at("R").get<double>();
        s.augmented = js.value("aug", 0) != 0;
        s.masked = js.value("mask", 0) != 0;
        t.steps.push_back(s);
      }
      pool.trajectories.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw PoolError(std::string("pool: schema error: ") + e.what());
  }
  pool.validate();
  return pool;
}

void save_pool(const std::string& path, const ExperiencePool& pool) {
  std::ofstream out(path);
  if (!out) throw PoolError("cannot write pool '" + path + "'");
  write_pool(out, pool);
  if (!out) throw PoolError("failed writing pool '" + path + "'");
}

ExperiencePool load_pool(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PoolError("cannot open pool '" + path + "'");
  try {
    return read_pool(in);
  } catch (const PoolError& e) {
    throw PoolError(path + ": " + e.what());
  }
}

std::array<std::uint64_t, 3> action_histogram(const ExperiencePool& pool) {
  std::array<std::uint64_t, 3> h{};
  for (const Trajectory& t : pool.trajectories) {
    for (const Step& s : t.steps) ++h[static_cast<std::size_t>(s.action)];
  }
  return h;
}

}  // namespace l4sllm::pool
