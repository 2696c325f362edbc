#pragma once

// Scenario files are line-oriented `key = value` text. `#` starts a comment.
// Each `flow = <kind> [count=N] [ecn=nonect|ect0|ect1] [start_ms=T]
// [stop_ms=T] [rate_bps=R] [size=B]` line adds a flow group.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "l4sllm/sim/flows.hpp"
#include "l4sllm/sim/types.hpp"

namespace l4sllm::sim {

struct ScenarioConfig {
  std::string name = "default";
  std::uint64_t seed = 1;
  Micros duration = 60'000'000;
  Micros access_delay = 1'000;
  // Random per-flow start offset drawn from [0, start_jitter).
  Micros start_jitter = 100'000;
  // L4S quanta per Classic quantum in the dual-queue scheduler.
  double l4s_weight = 9.0;
  Micros util_bin = 100'000;
  Dualpi2Params aqm;
  std::vector<FlowSpec> flows;

  void validate() const;
};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// 8 Mbps / 10 ms bottleneck for 60 s: two Cubic and two Reno flows (Not-ECT)
// in the Classic queue and one DCTCP-like ECT(1) flow in the L4S queue.
ScenarioConfig default_scenario();

// Built-in names: "default", "overload" (2x link rate Not-ECT CBR),
// "underload" (one CBR flow at half the link rate).
ScenarioConfig builtin_scenario(const std::string& name);

// `key = value` lines, `#` comments. Without any `flow` line the default flow
// mix is used.
ScenarioConfig parse_scenario(std::istream& in);
// A path to a scenario file, or a built-in name.
ScenarioConfig load_scenario(const std::string& path_or_name);
std::string scenario_to_text(const ScenarioConfig& config);
// FNV-1a of the canonical text form.
std::uint64_t scenario_hash(const ScenarioConfig& config);

}  // namespace l4sllm::sim
