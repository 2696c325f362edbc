#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "l4sllm/pool/augment.hpp"
#include "l4sllm/pool/normalize.hpp"
#include "l4sllm/pool/pool.hpp"
#include "l4sllm/sim/simulator.hpp"

using namespace l4sllm;
using namespace l4sllm::pool;

namespace {

// Direct forward sums, independent of the recursion under test.
std::vector<double> forward_sum_returns(const std::vector<double>& r, double gamma) {
  std::vector<double> out(r.size());
  for (std::size_t t = 0; t < r.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = t; i < r.size(); ++i) acc += std::pow(gamma, static_cast<double>(i - t)) * r[i];
    out[t] = acc;
  }
  return out;
}

sim::KernelLogRecord record(std::int64_t queue, std::int64_t delay_us, std::int64_t drops, std::int64_t action) {
  sim::KernelLogRecord r;
  r.queue_type = queue;
  r.current_queue_delay = delay_us;
  r.total_drops = drops;
  r.packet_length = 1500;
  r.length_in_bytes = 3000;
  r.drop_probability = 250'000;
  r.burst_allowance = 2'500;
  r.dequeue_action = action;
  return r;
}

std::vector<sim::KernelLogRecord> short_log(std::uint64_t seed) {
  sim::ScenarioConfig c = sim::default_scenario();
  c.seed = seed;
  c.duration = 3'000'000;
  return sim::run_scenario(c);
}

}  // namespace

TEST_CASE("reward examples") {
  CHECK(compute_reward(1500, 0) == 1500.0);
  CHECK(compute_reward(1500, 4) == 300.0);
  CHECK(compute_reward(100, 1) == 50.0);
  CHECK_THROWS_AS(compute_reward(0, 1), PoolError);
  CHECK_THROWS_AS(compute_reward(100, -1), PoolError);
}

TEST_CASE("returns-to-go examples") {
  const std::vector<double> r{10, 20, 30};
  const auto R = returns_to_go(r, 0.95);
  CHECK(R[2] == doctest::Approx(30.0));
  CHECK(R[1] == doctest::Approx(48.5));
  CHECK(R[0] == doctest::Approx(56.075));
  const auto undiscounted = returns_to_go(r, 1.0);
  CHECK(undiscounted[0] == 60.0);
  const auto myopic = returns_to_go(r, 0.0);
  CHECK(myopic == r);
  CHECK_THROWS_AS(returns_to_go(std::vector<double>{}, 0.9), PoolError);
  CHECK_THROWS_AS(returns_to_go(r, 1.5), PoolError);
}

TEST_CASE("returns-to-go agree with forward sums on random trajectories") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> reward(1.0, 1500.0);
  std::uniform_int_distribution<int> len(1, 300);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(static_cast<std::size_t>(len(rng)));
    for (double& v : r) v = reward(rng);
    const auto R = returns_to_go(r, 0.95);
    const auto oracle = forward_sum_returns(r, 0.95);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(std::abs(R[i] - oracle[i]) <= 1e-9 * std::max(1.0, oracle[i]));
  }
}

TEST_CASE("state extraction") {
  StateExtractor ex;
  const StateVector a = ex.extract(record(0, 4'200, 3, 0));
  CHECK(a[index(Feature::QueueType)] == 0.0);
  CHECK(a[index(Feature::CurrentQueueDelay)] == doctest::Approx(4.2));
  CHECK(a[index(Feature::BurstAllowance)] == doctest::Approx(2.5));
  CHECK(a[index(Feature::DropProbability)] == doctest::Approx(0.25));
  CHECK(a[index(Feature::TotalDropsDelta)] == 3.0);
  // Drop deltas are tracked per queue.
  const StateVector b = ex.extract(record(1, 0, 1, 0));
  CHECK(b[index(Feature::TotalDropsDelta)] == 1.0);
  const StateVector c = ex.extract(record(0, 0, 5, 0));
  CHECK(c[index(Feature::TotalDropsDelta)] == 2.0);
  CHECK(feature_names().size() == kStateDim);
  CHECK(feature_names()[0] == "queue_type");
}

TEST_CASE("trajectory building") {
  const std::vector<sim::KernelLogRecord> recs{record(0, 2'999, 0, 0), record(0, 0, 0, 1), record(1, 9'000, 0, 2)};
  const Trajectory t = build_trajectory(recs, {0.9, RewardMode::DelayPlusOne}, "x");
  REQUIRE(t.steps.size() == 3);
  // 2.999 ms counts as 2 whole milliseconds.
  CHECK(t.steps[0].reward == doctest::Approx(500.0));
  CHECK(t.steps[1].reward == 1500.0);
  CHECK(t.steps[2].reward == doctest::Approx(150.0));
  CHECK(t.steps[2].return_to_go == doctest::Approx(150.0));
  CHECK(t.steps[0].return_to_go == doctest::Approx(500 + 0.9 * 1500 + 0.81 * 150));
  CHECK_FALSE(t.steps[0].done);
  CHECK(t.steps[2].done);
  CHECK(t.steps[1].action == 1);

  const Trajectory n = build_trajectory(recs, {0.9, RewardMode::NextDelay});
  CHECK(n.steps[0].reward == 1500.0);
  CHECK(n.steps[1].reward == doctest::Approx(1500.0 / 9.0));
  CHECK_THROWS_AS(build_trajectory({}, {}), PoolError);
}

TEST_CASE("validation catches inconsistencies") {
  ExperiencePool p;
  p.trajectories.push_back(build_trajectory(short_log(1), {}));
  CHECK_NOTHROW(p.validate());
  ExperiencePool bad = p;
  bad.trajectories[0].steps[3].return_to_go += 1.0;
  CHECK_THROWS_AS(bad.validate(), PoolError);
  bad = p;
  bad.trajectories[0].steps[0].done = true;
  CHECK_THROWS_AS(bad.validate(), PoolError);
  bad = p;
  bad.trajectories[0].steps[1].action = 3;
  CHECK_THROWS_AS(bad.validate(), PoolError);
  bad = p;
  bad.gamma = 0.5;
  CHECK_THROWS_AS(bad.validate(), PoolError);
  CHECK_THROWS_AS(ExperiencePool{}.validate(), PoolError);
}

TEST_CASE("pool files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "l4sllm_pool_test";
  std::filesystem::create_directories(dir);
  for (int s : {2, 1}) {
    std::ofstream out(dir / ("run" + std::to_string(s) + ".klog"));
    sim::write_klog(out, short_log(static_cast<std::uint64_t>(s)));
  }
  const ExperiencePool p =
      build_pool({(dir / "run2.klog").string(), (dir / "run1.klog").string()}, {0.95, RewardMode::DelayPlusOne});
  REQUIRE(p.trajectories.size() == 2);
  CHECK(p.trajectories[0].source.find("run1") != std::string::npos);
  CHECK_NOTHROW(p.validate());
  const auto h = action_histogram(p);
  CHECK(h[0] + h[1] + h[2] == p.step_count());

  std::stringstream ss;
  write_pool(ss, p);
  const ExperiencePool q = read_pool(ss);
  CHECK(q.step_count() == p.step_count());
  CHECK(q.gamma == p.gamma);
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < p.trajectories[t].steps.size(); i += 97) {
      const Step& a = p.trajectories[t].steps[i];
      const Step& b = q.trajectories[t].steps[i];
      CHECK(a.reward == b.reward);
      CHECK(a.state == b.state);
      CHECK(a.action == b.action);
      CHECK(a.return_to_go == b.return_to_go);
    }
  }
  save_pool((dir / "p.pool.json").string(), p);
  CHECK(load_pool((dir / "p.pool.json").string()).step_count() == p.step_count());
  std::filesystem::remove_all(dir);

  std::istringstream not_json("{");
  CHECK_THROWS_AS(read_pool(not_json), PoolError);
  std::istringstream wrong(R"({"format":"other","version":1})");
  CHECK_THROWS_AS(read_pool(wrong), PoolError);
  CHECK_THROWS_AS(load_pool("/nonexistent/pool.json"), PoolError);
}

TEST_CASE("augmentation") {
  ExperiencePool p;
  p.trajectories.push_back(build_trajectory(short_log(1), {}, "a"));
  AugmentRules rules;
  rules.noise_sigma.fill(0.1);
  rules.jitter_range = 2;
  rules.dropout_prob = 0.3;
  rules.seed = 4;
  const ExperiencePool a = augment(p, rules);
  const ExperiencePool b = augment(p, rules);
  REQUIRE(a.trajectories.size() == 1);
  CHECK(a.trajectories[0].source == "a#aug");
  std::size_t masked = 0, changed = 0;
  const auto& src = p.trajectories[0].steps;
  const auto& aug = a.trajectories[0].steps;
  for (std::size_t i = 0; i < src.size(); ++i) {
    CHECK(aug[i].augmented);
    CHECK(aug[i].reward == src[i].reward);
    CHECK(aug[i].action == src[i].action);
    CHECK(aug[i].return_to_go == src[i].return_to_go);
    CHECK(aug[i].state == b.trajectories[0].steps[i].state);
    masked += aug[i].masked;
    changed += aug[i].state != src[i].state;
  }
  const double frac = static_cast<double>(masked) / static_cast<double>(src.size());
  CHECK(frac == doctest::Approx(0.3).epsilon(0.15));
  CHECK(changed > src.size() / 2);
  CHECK_NOTHROW(a.validate());

  AugmentRules bad;
  bad.dropout_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), PoolError);
}

TEST_CASE("normalization") {
  ExperiencePool p;
  p.trajectories.push_back(build_trajectory(short_log(1), {}));
  p.trajectories.push_back(build_trajectory(short_log(2), {}));
  const FeatureStats st = fit_feature_stats(p);
  CHECK(st.fitted);
  CHECK(st.return_scale > 0.0);
  // Packet length is constant in this scenario.
  CHECK(st.zero_variance[index(Feature::PacketLength)]);
  const ExperiencePool n = normalize_states(p);
  CHECK(n.normalized);
  double mean = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const auto& t : n.trajectories) {
    for (const auto& s : t.steps) {
      mean += s.state[index(Feature::CurrentQueueDelay)];
      sq += s.state[index(Feature::CurrentQueueDelay)] * s.state[index(Feature::CurrentQueueDelay)];
      CHECK(s.state[index(Feature::PacketLength)] == 0.0);
      ++count;
    }
  }
  mean /= static_cast<double>(count);
  CHECK(std::abs(mean) < 1e-9);
  CHECK(sq / static_cast<double>(count) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(normalize_states(n), PoolError);

  const StateVector raw = p.trajectories[0].steps[10].state;
  const StateVector back = denormalize_state(normalize_state(raw, st), st);
  for (std::size_t i = 0; i < kStateDim; ++i) CHECK(back[i] == doctest::Approx(raw[i]));

  const std::vector<std::size_t> only_first{0};
  const FeatureStats first = fit_feature_stats(p, only_first);
  CHECK(first.mean != st.mean);
}
