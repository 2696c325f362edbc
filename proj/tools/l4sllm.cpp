// Command-line entry point: simulate | build-pool | train | evaluate |
// compare | diagnose | report. Log verbosity comes from L4SLLM_LOG_LEVEL
// (trace, debug, info, warn, error, off).

#include <glob.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <random>
#include <spdlog/spdlog.h>
#include <sstream>

#include "l4sllm/eval/compare.hpp"
#include "l4sllm/eval/diagnostics.hpp"
#include "l4sllm/eval/evaluator.hpp"
#include "l4sllm/pool/augment.hpp"
#include "l4sllm/pool/normalize.hpp"
#include "l4sllm/sim/simulator.hpp"
#include "l4sllm/train/trainer.hpp"

using namespace l4sllm;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const std::string& p : patterns) {
    glob_t g{};
    const int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0) {
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    if (rc == GLOB_NOMATCH) throw std::runtime_error("no file matches '" + p + "'");
    if (rc != 0 && rc != GLOB_NOMATCH) throw std::runtime_error("cannot expand '" + p + "'");
  }
  return out;
}

struct SimulateArgs {
  std::string config = "default";
  std::string out;
  std::int64_t seed = -1;
  std::int64_t duration_ms = -1;
};

int run_simulate(const SimulateArgs& a) {
  sim::ScenarioConfig c = sim::load_scenario(a.config);
  if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
  if (a.duration_ms > 0) c.duration = a.duration_ms * 1000;
  sim::RunTrace trace;
  const auto records = sim::run_scenario(c, &trace);
  std::ofstream out(a.out);
  if (!out) throw std::runtime_error("cannot write '" + a.out + "'");
  sim::write_klog(out, records);
  spdlog::info("{} decisions ({} enqueue, {} drop, {} mark) -> {}", trace.decisions, trace.action_counts[0],
               trace.action_counts[1], trace.action_counts[2], a.out);
  return 0;
}

struct BuildPoolArgs {
  std::vector<std::string> logs;
  double gamma = 0.95;
  std::string out;
  std::string reward = "delay-plus-one";
  double noise = 0.0;
  int jitter = 0;
  double dropout = 0.0;
  std::uint64_t augment_seed = 1;
  bool normalize = false;
};

int run_build_pool(const BuildPoolArgs& a) {
  pool::BuildOptions opts;
  opts.gamma = a.gamma;
  if (a.reward == "delay-plus-one") opts.reward = pool::RewardMode::DelayPlusOne;
  else if (a.reward == "next-delay") opts.reward = pool::RewardMode::NextDelay;
  else throw std::invalid_argument("unknown reward mode '" + a.reward + "'");
  pool::ExperiencePool p = pool::build_pool(expand_globs(a.logs), opts);
  if (a.noise > 0.0 || a.jitter > 0 || a.dropout > 0.0) {
    pool::AugmentRules rules;
    rules.noise_sigma.fill(a.noise);
    rules.jitter_range = a.jitter;
    rules.dropout_prob = a.dropout;
    rules.seed = a.augment_seed;
    const pool::ExperiencePool aug = pool::augment(p, rules);
    p.trajectories.insert(p.trajectories.end(), aug.trajectories.begin(), aug.trajectories.end());
  }
  if (a.normalize) p = pool::normalize_states(p);
  pool::save_pool(a.out, p);
  const auto h = pool::action_histogram(p);
  spdlog::info("{} trajectories, {} steps (actions {}/{}/{}) -> {}", p.trajectories.size(), p.step_count(), h[0], h[1],
               h[2], a.out);
  return 0;
}

struct TrainArgs {
  std::string pool;
  std::string config;
  std::string out;
  std::string report;
  std::string lora_from;
  std::uint64_t model_seed = 1;
};

int run_train(const TrainArgs& a) {
  model::ModelConfig mc = model::toy_config();
  train::TrainConfig tc;
  tc.window = mc.context_window;
  if (!a.config.empty()) {
    const json j = json::parse(read_file(a.config));
    if (j.contains("model")) mc = model::ModelConfig::from_json(j.at("model").dump());
    tc.window = mc.context_window;
    if (j.contains("train")) {
      json t = j.at("train");
      if (!t.contains("window")) t["window"] = mc.context_window;
      tc = train::TrainConfig::from_json(t.dump());
    }
  }
  const pool::ExperiencePool p = pool::load_pool(a.pool);
  if (std::abs(p.gamma - tc.gamma) > 1e-12) tc.gamma = p.gamma;

  std::unique_ptr<model::PolicyModel> m;
  if (!a.lora_from.empty()) {
    model::LoadedCheckpoint base = model::load_checkpoint(a.lora_from);
    m = std::move(base.model);
    if (!m->enable_lora(a.model_seed)) spdlog::warn("LoRA rank is not below the wrapped matrix sizes");
    const auto s = m->lora_summary();
    spdlog::info("LoRA on {} matrices: {} trainable, {} frozen", s.wrapped_matrices, s.trainable, s.frozen);
  } else {
    m = std::make_unique<model::PolicyModel>(mc, a.model_seed);
  }
  const train::TrainResult r = train::train(*m, p, tc, a.out);
  if (!a.report.empty()) write_file(a.report, r.report.to_json() + "\n");
  spdlog::info("best held-out accuracy {:.4f} at epoch {} -> {}", r.report.final_eval_accuracy, r.report.best_epoch,
               a.out);
  return 0;
}

struct EvaluateArgs {
  std::string ckpt;
  std::string scenario = "default";
  std::size_t interval = 10;
  bool rule = false;
  std::int64_t seed = -1;
  std::int64_t duration_ms = -1;
  std::string out;
  std::string log;
  bool inject_latency = false;
};

int run_evaluate(const EvaluateArgs& a) {
  sim::ScenarioConfig c = sim::load_scenario(a.scenario);
  if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
  if (a.duration_ms > 0) c.duration = a.duration_ms * 1000;
  eval::EvalOptions opts;
  opts.driver.mode = a.rule ? eval::DriverMode::RuleBased : eval::DriverMode::LlmEvery;
  opts.driver.interval = a.interval;
  opts.driver.inject_latency = a.inject_latency;
  opts.keep_log = !a.log.empty();
  eval::EvalRun run;
  if (a.rule) {
    run = eval::evaluate(nullptr, nullptr, "", c, opts);
  } else {
    if (a.ckpt.empty()) throw std::invalid_argument("evaluate: --ckpt is required unless --rule is given");
    model::LoadedCheckpoint ck = model::load_checkpoint(a.ckpt);
    run = eval::evaluate(ck, c, opts);
  }
  eval::save_stats(a.out, run.stats);
  if (!a.log.empty()) {
    std::ofstream out(a.log);
    if (!out) throw std::runtime_error("cannot write '" + a.log + "'");
    sim::write_klog(out, run.log);
  }
  const auto& s = run.stats.summary.at("qdelay");
  spdlog::info("{}: median delay {:.3f} ms, IQR {:.3f} ms, {} inferences, {} violations -> {}",
               run.stats.header.driver, s.median, s.iqr, run.stats.counts.inferences,
               run.stats.counts.policy_violations, a.out);
  return 0;
}

int run_compare(const std::string& a, const std::string& b, const std::string& out) {
  const eval::CompareReport r = eval::compare(eval::load_stats(a), eval::load_stats(b));
  const std::string text = r.to_json();
  if (out.empty()) std::cout << text << '\n';
  else write_file(out, text + "\n");
  return 0;
}

struct DiagnoseArgs {
  std::string ckpt;
  std::string trace;
  std::size_t pairs = 1000;
  std::size_t layer = 0;
  double band = 0.0;
  std::uint64_t seed = 1;
  std::string out;
};

int run_diagnose(const DiagnoseArgs& a) {
  const auto records = sim::read_klog_file(a.trace);
  if (records.empty()) throw std::invalid_argument("diagnose: empty trace");
  json j;
  std::vector<double> qd;
  for (const auto& r : records) qd.push_back(static_cast<double>(r.current_queue_delay) / 1000.0);
  const double target = static_cast<double>(records.front().qdelay_reference) / 1000.0;
  const eval::DriftReport drift = eval::lyapunov_drift(qd, target, a.band);
  j["lyapunov"] = {{"target_ms", target},
                   {"mean_drift", drift.mean_drift},
                   {"fraction_negative", drift.fraction_negative},
                   {"outside_band", drift.outside_band},
                   {"steps", drift.drift.size()}};

  if (!a.ckpt.empty()) {
    model::LoadedCheckpoint ck = model::load_checkpoint(a.ckpt);
    model::PolicyModel& m = *ck.model;
    if (a.layer >= m.layer_count()) throw std::invalid_argument("diagnose: layer out of range");
    pool::ExperiencePool p;
    p.gamma = ck.meta.gamma;
    p.trajectories.push_back(pool::build_trajectory(records, {ck.meta.gamma, pool::RewardMode::DelayPlusOne}));
    p = pool::normalize_states(p, ck.meta.feature_stats);
    const std::size_t w = m.config().context_window;
    const train::WindowSampler sampler(p, {}, w, false);
    std::mt19937_64 rng(a.seed);
    auto hidden = [&](const train::WindowRef& ref) {
      const auto seq = m.build_sequence(train::make_batch(p, std::span(&ref, 1), w));
      return std::vector<double>(seq.normalized.data().begin(), seq.normalized.data().end());
    };
    tensor::AttentionMask mask;
    const std::size_t n = w * model::kTokensPerStep;
    const std::size_t d = m.config().embed_size;
    const model::PolicyModel& cm = m;
    const eval::BlockFn block = [&](const std::vector<double>& h) {
      const tensor::Tensor out = cm.block_forward(a.layer, tensor::Tensor({1, n, d}, h), mask);
      return std::vector<double>(out.data().begin(), out.data().end());
    };
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    for (std::size_t i = 0; i < a.pairs; ++i) pairs.emplace_back(hidden(sampler.draw(rng)), hidden(sampler.draw(rng)));
    const eval::LipschitzReport lip = eval::lipschitz_estimate(block, pairs);
    j["lipschitz"] = {{"layer", a.layer},
                      {"estimate", lip.estimate},
                      {"pairs_used", lip.pairs_used},
                      {"skipped", lip.skipped},
                      {"at_least_one", lip.at_least_one}};
  }
  const std::string text = j.dump(2);
  if (a.out.empty()) std::cout << text << '\n';
  else write_file(a.out, text + "\n");
  return 0;
}

int run_report(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<eval::EvalStats> all;
  for (const auto& path : inputs) all.push_back(eval::load_stats(path));
  struct Metric {
    std::string name;
    std::function<double(const eval::EvalStats&)> get;
  };
  std::vector<Metric> metrics;
  for (const std::string series : {"qdelay", "qdelay_classic", "qdelay_l4s", "util"}) {
    for (const std::string field : {"median", "q1", "q3", "iqr", "whisker_low", "whisker_high", "outliers", "mean"}) {
      metrics.push_back({series + "_" + field, [series, field](const eval::EvalStats& s) {
                           const auto it = s.summary.find(series);
                           if (it == s.summary.end()) return 0.0;
                           const eval::Summary& m = it->second;
                           if (field == "median") return m.median;
                           if (field == "q1") return m.q1;
                           if (field == "q3") return m.q3;
                           if (field == "iqr") return m.iqr;
                           if (field == "whisker_low") return m.whisker_low;
                           if (field == "whisker_high") return m.whisker_high;
                           if (field == "outliers") return static_cast<double>(m.outliers);
                           return m.mean;
                         }});
    }
  }
  metrics.push_back({"decisions", [](const eval::EvalStats& s) { return static_cast<double>(s.counts.decisions); }});
  metrics.push_back({"drops", [](const eval::EvalStats& s) { return static_cast<double>(s.counts.drops); }});
  metrics.push_back({"marks", [](const eval::EvalStats& s) { return static_cast<double>(s.counts.marks); }});
  metrics.push_back({"inferences", [](const eval::EvalStats& s) { return static_cast<double>(s.counts.inferences); }});
  metrics.push_back(
      {"policy_violations", [](const eval::EvalStats& s) { return static_cast<double>(s.counts.policy_violations); }});
  metrics.push_back({"latency_median_s", [](const eval::EvalStats& s) {
                       return s.latency_s.empty() ? 0.0 : eval::summarize(s.latency_s).median;
                     }});

  const bool as_json = out.size() >= 5 && out.substr(out.size() - 5) == ".json";
  std::ostringstream text;
  if (as_json) {
    json j = json::object();
    for (std::size_t i = 0; i < all.size(); ++i) {
      json col = json::object();
      for (const Metric& m : metrics) col[m.name] = m.get(all[i]);
      col["cdf"] = {{"x", all[i].cdf.x}, {"y", all[i].cdf.y}};
      j[inputs[i]] = col;
    }
    text << j.dump(2) << '\n';
  } else {
    text << "metric";
    for (const auto& path : inputs) text << ',' << path;
    text << '\n';
    text.precision(10);
    for (const Metric& m : metrics) {
      text << m.name;
      for (const auto& s : all) text << ',' << m.get(s);
      text << '\n';
    }
  }
  write_file(out, text.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* level = std::getenv("L4SLLM_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));

  CLI::App app{"L4S AQM policy distillation toolkit"};
  app.require_subcommand(1);

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a scenario under DualPI2 and write its decision log");
  sim_cmd->add_option("--config", sa.config, "Scenario file or built-in name (default, overload, underload)");
  sim_cmd->add_option("--out", sa.out, "Output .klog")->required();
  sim_cmd->add_option("--seed", sa.seed, "Override the scenario seed");
  sim_cmd->add_option("--duration-ms", sa.duration_ms, "Override the scenario duration");

  BuildPoolArgs ba;
  auto* pool_cmd = app.add_subcommand("build-pool", "Turn decision logs into an experience pool");
  pool_cmd->add_option("--logs", ba.logs, "Log files or glob patterns (one trajectory per file)")->required();
  pool_cmd->add_option("--gamma", ba.gamma, "Discount factor")->check(CLI::Range(0.0, 1.0));
  pool_cmd->add_option("--out", ba.out, "Output .pool.json")->required();
  pool_cmd->add_option("--reward", ba.reward, "delay-plus-one or next-delay");
  pool_cmd->add_option("--augment-noise", ba.noise, "Gaussian state noise sigma (appends an augmented copy)");
  pool_cmd->add_option("--augment-jitter", ba.jitter, "Temporal jitter range in steps");
  pool_cmd->add_option("--augment-dropout", ba.dropout, "Timestep dropout probability");
  pool_cmd->add_option("--augment-seed", ba.augment_seed, "Augmentation seed");
  pool_cmd->add_flag("--normalize", ba.normalize, "Store normalized states");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train the policy on a pool");
  train_cmd->add_option("--pool", ta.pool, "Input .pool.json")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", ta.config, "JSON with optional \"model\" and \"train\" sections")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", ta.out, "Output checkpoint")->required();
  train_cmd->add_option("--report", ta.report, "Per-epoch report JSON");
  train_cmd->add_option("--lora-from", ta.lora_from, "Adapt this checkpoint with LoRA instead of training from scratch")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--model-seed", ta.model_seed, "Initialization seed");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Closed-loop evaluation in the simulator");
  eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--scenario", ea.scenario, "Scenario file or built-in name");
  eval_cmd->add_option("--interval", ea.interval, "Model decides every N-th packet")->check(CLI::PositiveNumber);
  eval_cmd->add_flag("--rule", ea.rule, "Use DualPI2 rules only");
  eval_cmd->add_option("--seed", ea.seed, "Override the scenario seed");
  eval_cmd->add_option("--duration-ms", ea.duration_ms, "Override the scenario duration");
  eval_cmd->add_option("--out", ea.out, "Output stats JSON")->required();
  eval_cmd->add_option("--log", ea.log, "Also write the decision log");
  eval_cmd->add_flag("--inject-latency", ea.inject_latency, "Delay model-decided packets by the measured latency");

  std::string ca, cb, cout_path;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare two stats files from the same scenario and seed");
  cmp_cmd->add_option("--a", ca, "Baseline stats")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--b", cb, "Candidate stats")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("--out", cout_path, "Output JSON (stdout if omitted)");

  DiagnoseArgs da;
  auto* diag_cmd = app.add_subcommand("diagnose", "Lyapunov drift of a trace and Lipschitz estimate of a block");
  diag_cmd->add_option("--trace", da.trace, "Decision log")->required()->check(CLI::ExistingFile);
  diag_cmd->add_option("--ckpt", da.ckpt, "Checkpoint for the Lipschitz estimate")->check(CLI::ExistingFile);
  diag_cmd->add_option("--pairs", da.pairs, "Hidden-state pairs");
  diag_cmd->add_option("--layer", da.layer, "Backbone block index");
  diag_cmd->add_option("--band", da.band, "Target band in ms for the drift fraction");
  diag_cmd->add_option("--seed", da.seed, "Pair sampling seed");
  diag_cmd->add_option("--out", da.out, "Output JSON (stdout if omitted)");

  std::vector<std::string> rin;
  std::string rout;
  auto* rep_cmd = app.add_subcommand("report", "Tabulate stats files as CSV, or JSON when --out ends in .json");
  rep_cmd->add_option("--in", rin, "Stats files")->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("--out", rout, "Output .csv or .json")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*sim_cmd) return run_simulate(sa);
    if (*pool_cmd) return run_build_pool(ba);
    if (*train_cmd) return run_train(ta);
    if (*eval_cmd) return run_evaluate(ea);
    if (*cmp_cmd) return run_compare(ca, cb, cout_path);
    if (*diag_cmd) return run_diagnose(da);
    if (*rep_cmd) return run_report(rin, rout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
