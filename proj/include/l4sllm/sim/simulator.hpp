#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "l4sllm/sim/klog.hpp"
#include "l4sllm/sim/scenario.hpp"
#include "l4sllm/sim/types.hpp"

namespace l4sllm::sim {

// What a decision policy sees for one arriving packet. `record` is the log
// snapshot with dequeue_action left at 0; `rule` is the DualPI2 outcome for
// the same rng draw.
struct DecisionContext {
  const KernelLogRecord& record;
  const Packet& packet;
  const QueueState& queue;
  const Dualpi2Params& params;
  double rng_draw;
  Decision rule;
  Micros now;
  std::uint64_t decision_index;
};

class DecisionPolicy {
 public:
  virtual ~DecisionPolicy() = default;
  virtual Action decide(const DecisionContext& ctx) = 0;
  // Called after the final action is applied, with the logged record.
  virtual void observe(const KernelLogRecord& /*record*/) {}
  // Extra time before the last decided packet joins its queue (0 = none).
  virtual Micros take_decision_delay() { return 0; }
};

class RulePolicy final : public DecisionPolicy {
 public:
  Action decide(const DecisionContext& ctx) override { return ctx.rule.action; }
};

struct SojournSample {
  Micros at;
  Micros sojourn;
  QueueClass queue;
};

struct RunTrace {
  std::vector<SojournSample> sojourns;
  // Bytes delivered to the sink per utilization bin.
  std::vector<double> delivered_bytes;
  Micros util_bin = 100'000;
  // p' after each PI update, with its time.
  std::vector<std::pair<Micros, double>> probability;
  std::array<QueueState, 2> final_queues{};
  std::array<std::uint64_t, kActionCount> action_counts{};
  std::uint64_t decisions = 0;
  std::uint64_t forced_drops = 0;       // buffer overflow overrides
  std::uint64_t policy_violations = 0;  // Mark on Not-ECT turned into Drop
  std::uint64_t events = 0;
  std::vector<std::uint64_t> flow_delivered_bytes;
};

using RecordSink = std::function<void(const KernelLogRecord&)>;

struct RunOptions {
  DecisionPolicy* policy = nullptr;  // null means DualPI2 rules
  RecordSink sink;
  bool check_invariants = true;
};

// Snapshot of a queue in log form.
KernelLogRecord make_record(const QueueState& q, const Dualpi2Params& params, const Packet& p, Action action);

// Uniform [0,1) from the top 53 bits, identical across standard libraries.
double uniform53(std::mt19937_64& rng);

// Flows send through an access link to a single DualPI2 bottleneck and the
// sink acks straight back. One run per Simulator call; the object is reusable.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig config);
  const ScenarioConfig& config() const { return config_; }
  RunTrace run(const RunOptions& options = {}) const;

 private:
  ScenarioConfig config_;
};

// Runs with DualPI2 rules and returns the full log.
std::vector<KernelLogRecord> run_scenario(const ScenarioConfig& config, RunTrace* trace = nullptr);

}  // namespace l4sllm::sim
