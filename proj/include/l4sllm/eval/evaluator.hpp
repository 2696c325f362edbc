#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "l4sllm/eval/driver.hpp"
#include "l4sllm/eval/stats.hpp"
#include "l4sllm/model/checkpoint.hpp"
#include "l4sllm/sim/scenario.hpp"

namespace l4sllm::eval {

inline constexpr sim::Micros kSteadyStateStart = 5'000'000;

struct EvalOptions {
  DriverConfig driver;
  sim::Micros steady_start = kSteadyStateStart;
  bool keep_log = true;
};

struct EvalRun {
  EvalStats stats;
  std::vector<sim::KernelLogRecord> log;
  sim::RunTrace trace;
};

// Closed-loop run. `model`/`meta` may be null only for the rule-based driver.
EvalRun evaluate(model::PolicyModel* model, const model::CheckpointMeta* meta, const std::string& ckpt_hash,
                 const sim::ScenarioConfig& scenario, const EvalOptions& options);
EvalRun evaluate(model::LoadedCheckpoint& ckpt, const sim::ScenarioConfig& scenario, const EvalOptions& options);

struct ReplayResult {
  std::uint64_t decisions = 0;
  std::uint64_t inferences = 0;
  // Fraction of model decisions equal to the logged action.
  double agreement = 0.0;
};

// Feeds a fixed log through the driver: the model is consulted on its turns
// and the logged actions are kept as history.
ReplayResult replay(model::PolicyModel& model, const model::CheckpointMeta& meta,
                    const std::vector<sim::KernelLogRecord>& records, const DriverConfig& driver);

std::string hash_hex(std::uint64_t h);

}  // namespace l4sllm::eval
