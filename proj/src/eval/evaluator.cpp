#include "l4sllm/eval/evaluator.hpp"

#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace l4sllm::eval {

std::string hash_hex(std::uint64_t h) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

EvalRun evaluate(model::PolicyModel* model, const model::CheckpointMeta* meta, const std::string& ckpt_hash,
                 const sim::ScenarioConfig& scenario, const EvalOptions& options) {
  options.driver.validate();
  std::unique_ptr<ModelPolicy> policy;
  sim::RulePolicy rules;
  sim::RunOptions run;
  if (options.driver.mode == DriverMode::LlmEvery) {
    if (model == nullptr || meta == nullptr) throw std::invalid_argument("evaluate: the model driver needs a checkpoint");
    policy = std::make_unique<ModelPolicy>(*model, *meta, options.driver);
    run.policy = policy.get();
  } else {
    run.policy = &rules;
  }
  EvalRun out;
  if (options.keep_log) run.sink = [&out](const sim::KernelLogRecord& r) { out.log.push_back(r); };
  out.trace = sim::Simulator(scenario).run(run);
  out.stats = compute_stats(out.trace, scenario, options.steady_start);
  out.stats.header.ckpt_hash = ckpt_hash;
  out.stats.header.driver = options.driver.describe();
  if (policy) {
    out.stats.counts.inferences = policy->inferences();
    out.stats.counts.model_overrides = policy->overrides();
    out.stats.latency_s = policy->latencies();
  }
  return out;
}

EvalRun evaluate(model::LoadedCheckpoint& ckpt, const sim::ScenarioConfig& scenario, const EvalOptions& options) {
  return evaluate(ckpt.model.get(), &ckpt.meta, hash_hex(ckpt.hash), scenario, options);
}

ReplayResult replay(model::PolicyModel& model, const model::CheckpointMeta& meta,
                    const std::vector<sim::KernelLogRecord>& records, const DriverConfig& driver) {
  ModelPolicy policy(model, meta, driver);
  ReplayResult out;
  std::uint64_t agree = 0;
  for (const sim::KernelLogRecord& r : records) {
    if (model_turn(driver, out.decisions)) {
      agree += static_cast<std::int64_t>(policy.infer(r)) == r.dequeue_action ? 1 : 0;
    }
    policy.observe(r);
    ++out.decisions;
  }
  out.inferences = policy.inferences();
  out.agreement = out.inferences ? static_cast<double>(agree) / static_cast<double>(out.inferences) : 0.0;
  return out;
}

}  // namespace l4sllm::eval
