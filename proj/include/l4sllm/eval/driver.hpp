#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "l4sllm/model/checkpoint.hpp"
#include "l4sllm/model/policy.hpp"
#include "l4sllm/pool/state.hpp"
#include "l4sllm/sim/simulator.hpp"

namespace l4sllm::eval {

enum class DriverMode { RuleBased, LlmEvery };

struct DriverConfig {
  DriverMode mode = DriverMode::RuleBased;
  std::size_t interval = 10;
  // Feed measured inference time back as a per-decision enqueue delay.
  bool inject_latency = false;

  void validate() const;
  std::string describe() const;
};

// Decision i (0-based) goes to the model when (i + 1) % interval == 0.
bool model_turn(const DriverConfig& cfg, std::uint64_t decision_index);

// DualPI2 rules, with every interval-th decision taken by the model from the
// last w steps of history. Returns-to-go inside the window are rebuilt from
// the deployment target as R_j = r_j + gamma R_{j+1}.
class ModelPolicy final : public sim::DecisionPolicy {
 public:
  ModelPolicy(model::PolicyModel& model, const model::CheckpointMeta& meta, DriverConfig cfg);

  sim::Action decide(const sim::DecisionContext& ctx) override;
  void observe(const sim::KernelLogRecord& record) override;
  sim::Micros take_decision_delay() override;

  // Model action for a record given the current history (no bookkeeping).
  sim::Action infer(const sim::KernelLogRecord& record);

  std::uint64_t inferences() const { return inferences_; }
  const std::vector<double>& latencies() const { return latencies_; }
  std::uint64_t overrides() const { return overrides_; }

 private:
  struct HistoryStep {
    pool::StateVector state;
    double reward;
    int action;
  };
  model::PolicyModel& model_;
  model::CheckpointMeta meta_;
  DriverConfig cfg_;
  pool::StateExtractor extractor_;
  std::deque<HistoryStep> history_;
  std::uint64_t inferences_ = 0;
  std::uint64_t overrides_ = 0;  // model disagreed with the rule
  std::vector<double> latencies_;
  sim::Micros pending_delay_ = 0;
};

}  // namespace l4sllm::eval
