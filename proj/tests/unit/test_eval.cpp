#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "l4sllm/eval/compare.hpp"
#include "l4sllm/eval/diagnostics.hpp"
#include "l4sllm/eval/evaluator.hpp"
#include "l4sllm/pool/normalize.hpp"
#include "l4sllm/train/trainer.hpp"

using namespace l4sllm;
using namespace l4sllm::eval;

namespace {

sim::ScenarioConfig short_default(std::uint64_t seed) {
  sim::ScenarioConfig c = sim::default_scenario();
  c.seed = seed;
  c.duration = 7'000'000;
  return c;
}

// Untrained model with stats fitted on a short rule-based run.
struct Fixture {
  std::unique_ptr<model::PolicyModel> model;
  model::CheckpointMeta meta;
  Fixture() {
    model::ModelConfig c = model::toy_config();
    model = std::make_unique<model::PolicyModel>(c, 1);
    pool::ExperiencePool p;
    p.trajectories.push_back(pool::build_trajectory(sim::run_scenario(short_default(1)), {}));
    meta.feature_stats = pool::fit_feature_stats(p);
    meta.gamma = 0.95;
    meta.target_return = 2.0;
  }
};

}  // namespace

TEST_CASE("quantiles and box summary") {
  const std::vector<double> v{1, 2, 3, 4};
  CHECK(quantile_sorted(v, 0.0) == 1.0);
  CHECK(quantile_sorted(v, 1.0) == 4.0);
  CHECK(quantile_sorted(v, 0.5) == 2.5);
  CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
  CHECK_THROWS(quantile_sorted({}, 0.5));
  const Summary s = summarize({1, 2, 3, 4, 5, 6, 7, 8, 100});
  CHECK(s.median == 5.0);
  CHECK(s.q1 == 3.0);
  CHECK(s.q3 == 7.0);
  CHECK(s.iqr == 4.0);
  CHECK(s.whisker_high == 8.0);
  CHECK(s.whisker_low == 1.0);
  CHECK(s.outliers == 1);
  CHECK(s.count == 9);
}

TEST_CASE("empirical cdf") {
  const Cdf c = empirical_cdf({3, 1, 2, 2}, 200);
  CHECK(c.y.back() == 1.0);
  CHECK(std::is_sorted(c.x.begin(), c.x.end()));
  CHECK(std::is_sorted(c.y.begin(), c.y.end()));
  const Cdf big = empirical_cdf(std::vector<double>(5000, 1.0), 100);
  CHECK(big.x.size() <= 100);
}

TEST_CASE("two-sample KS examples") {
  CHECK(ks_statistic({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(ks_statistic({1, 2, 3}, {4, 5, 6}) == 1.0);
  // F_a jumps to 0.5 at 1 while F_b is still 0.
  CHECK(ks_statistic({1, 2}, {2, 3}) == doctest::Approx(0.5));
  CHECK(ks_statistic({0, 0, 0, 10}, {0, 10, 10, 10}) == doctest::Approx(0.5));
  CHECK_THROWS(ks_statistic({}, {1}));
}

TEST_CASE("lyapunov drift") {
  std::vector<double> q;
  for (int i = 0; i < 50; ++i) q.push_back(15.0 + 40.0 * std::pow(0.8, i));
  const DriftReport r = lyapunov_drift(q, 15.0);
  CHECK(r.fraction_negative == 1.0);
  CHECK(r.mean_drift < 0.0);
  CHECK(r.drift.size() == 49);
  CHECK(r.outside_band == 49);
  const DriftReport up = lyapunov_drift(std::vector<double>{15, 16, 18}, 15.0);
  CHECK(up.fraction_negative == 0.0);
  // The first step sits inside the band.
  const DriftReport band = lyapunov_drift(std::vector<double>{15.5, 20, 17}, 15.0, 1.0);
  CHECK(band.outside_band == 1);
  CHECK(band.fraction_negative == 1.0);
  const DriftReport still = lyapunov_drift(std::vector<double>{15, 15}, 15.0);
  CHECK(still.fraction_negative == 1.0);
  CHECK_THROWS(lyapunov_drift(std::vector<double>{1.0}, 15.0));
}

TEST_CASE("lipschitz estimate") {
  std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs{
      {{1, 2, 3}, {0, 0, 0}}, {{1, 1, 1}, {1, 1, 1}}, {{-4, 2, 0.5}, {3, 3, 3}}};
  const BlockFn identity = [](const std::vector<double>& h) { return h; };
  const BlockFn half = [](const std::vector<double>& h) {
    std::vector<double> o(h);
    for (double& v : o) v *= 0.5;
    return o;
  };
  const LipschitzReport id = lipschitz_estimate(identity, pairs);
  CHECK(id.estimate == 1.0);
  CHECK(id.skipped == 1);
  CHECK(id.pairs_used == 2);
  CHECK(id.at_least_one);
  const LipschitzReport h = lipschitz_estimate(half, pairs);
  CHECK(h.estimate == 0.5);
  CHECK_FALSE(h.at_least_one);
}

TEST_CASE("model turns") {
  DriverConfig d;
  d.mode = DriverMode::LlmEvery;
  d.interval = 10;
  CHECK_FALSE(model_turn(d, 0));
  CHECK(model_turn(d, 9));
  CHECK(model_turn(d, 19));
  CHECK_FALSE(model_turn(d, 10));
  CHECK(d.describe() == "llm_every_10");
  d.mode = DriverMode::RuleBased;
  CHECK_FALSE(model_turn(d, 9));
  CHECK(d.describe() == "rule");
}

TEST_CASE("rule-based driver passes the simulator through") {
  const sim::ScenarioConfig c = short_default(2);
  sim::RunTrace direct;
  const auto records = sim::run_scenario(c, &direct);
  EvalOptions opts;
  const EvalRun run = evaluate(nullptr, nullptr, "", c, opts);
  CHECK(run.log == records);
  CHECK(run.stats.counts.decisions == direct.decisions);
  CHECK(run.stats.counts.inferences == 0);
  CHECK(run.stats.header.driver == "rule");
  CHECK(run.stats.header.seed == 2);
  CHECK(run.stats.series.at("qdelay").size() > 100);
  CHECK(run.stats.series.at("util").size() == 20);
  for (double u : run.stats.series.at("util")) CHECK(u <= 1.0 + 1e-9);
}

TEST_CASE("model driver counts inferences and round-trips stats") {
  Fixture f;
  const sim::ScenarioConfig c = short_default(3);
  EvalOptions opts;
  opts.driver.mode = DriverMode::LlmEvery;
  opts.driver.interval = 10;
  const EvalRun run = evaluate(f.model.get(), &f.meta, "abc", c, opts);
  CHECK(run.stats.counts.inferences == run.stats.counts.decisions / 10);
  CHECK(run.stats.latency_s.size() == run.stats.counts.inferences);
  CHECK(run.stats.header.ckpt_hash == "abc");

  const auto path = (std::filesystem::temp_directory_path() / "l4sllm_stats.json").string();
  save_stats(path, run.stats);
  const EvalStats back = load_stats(path);
  std::filesystem::remove(path);
  CHECK(back.to_json() == run.stats.to_json());

  const EvalRun rule = evaluate(nullptr, nullptr, "", c, EvalOptions{});
  const CompareReport cmp = compare(rule.stats, run.stats);
  CHECK(cmp.series.count("qdelay") == 1);
  CHECK(cmp.series.at("qdelay").ks >= 0.0);
  CHECK(cmp.series.at("qdelay").ks <= 1.0);
  CHECK(cmp.driver_b == "llm_every_10");
  const EvalRun other = evaluate(nullptr, nullptr, "", short_default(4), EvalOptions{});
  CHECK_THROWS(compare(rule.stats, other.stats));
  CHECK_THROWS(evaluate(nullptr, nullptr, "", c, opts));
}

TEST_CASE("injected latency delays model-decided packets") {
  Fixture f;
  const sim::ScenarioConfig c = short_default(3);
  EvalOptions opts;
  opts.driver.mode = DriverMode::LlmEvery;
  opts.driver.interval = 10;
  opts.driver.inject_latency = true;
  const EvalRun run = evaluate(f.model.get(), &f.meta, "", c, opts);
  CHECK(run.stats.counts.inferences > 0);
  CHECK(run.stats.header.driver == "llm_every_10+latency");
}

TEST_CASE("replay inference counts scale with the interval") {
  Fixture f;
  const auto records = sim::run_scenario(short_default(5));
  DriverConfig d10{DriverMode::LlmEvery, 10, false};
  DriverConfig d100{DriverMode::LlmEvery, 100, false};
  const ReplayResult r10 = replay(*f.model, f.meta, records, d10);
  const ReplayResult r100 = replay(*f.model, f.meta, records, d100);
  CHECK(r10.decisions == records.size());
  CHECK(r10.inferences == records.size() / 10);
  CHECK(r100.inferences == records.size() / 100);
  CHECK(r10.agreement >= 0.0);
  CHECK(r10.agreement <= 1.0);
  CHECK(hash_hex(255).size() == 16);
}
