#pragma once

#include "l4sllm/sim/types.hpp"

namespace l4sllm::sim {

// One PI step, p' += alpha (qdelay - target) + beta (qdelay - prev), clamped
// to [0, 1]. q.current_queue_delay must hold the delay sampled for this step.
// Also advances the burst allowance:
//   - while positive it shrinks by tupdate,
//   - it is re-armed to max_burst once p' is 0 and both delays sit below target/2.
QueueState pi_update(QueueState q, const Dualpi2Params& params, Micros now);

// ECT(1) and CE go to the L4S queue; ECT(0) and Not-ECT to Classic.
QueueClass classify_packet(const Packet& p);

// The coupled DualPI2 rule for one arriving packet.
//   L4S:     Mark if current delay > max_ecn_threshold, else Mark with prob min(k p', 1).
//   Classic: congestion with prob p'^2, signalled by Mark when ECN-capable, else Drop.
// A positive burst allowance suppresses both. Buffer overflow forces Drop.
Decision aqm_decision(const QueueState& q, const Packet& p, const Dualpi2Params& params, double rng_draw);

// Per-packet probability the rule applies to this queue.
double coupled_probability(const QueueState& q, const Dualpi2Params& params);

}  // namespace l4sllm::sim
