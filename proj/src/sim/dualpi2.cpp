#include "l4sllm/sim/dualpi2.hpp"

#include <algorithm>
#include <cmath>

namespace l4sllm::sim {

std::string_view to_string(Ecn ecn) {
  switch (ecn) {
    case Ecn::NonECT: return "nonect";
    case Ecn::ECT1: return "ect1";
    case Ecn::ECT0: return "ect0";
    case Ecn::CE: return "ce";
  }
  return "?";
}

std::string_view to_string(QueueClass q) { return q == QueueClass::L4S ? "l4s" : "classic"; }

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Enqueue: return "enqueue";
    case Action::Drop: return "drop";
    case Action::Mark: return "mark";
  }
  return "?";
}

std::int64_t Dualpi2Params::flags() const {
  std::int64_t f = 0x1;
  if (max_ecn_threshold != kInfiniteMicros) f |= 0x2;
  if (coupling_factor_k > 0.0) f |= 0x4;
  return f;
}

void Dualpi2Params::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("dualpi2: alpha and beta must be >= 0");
  if (!(coupling_factor_k >= 1.0)) throw std::invalid_argument("dualpi2: coupling factor k must be >= 1");
  if (qdelay_target <= 0) throw std::invalid_argument("dualpi2: qdelay_target must be > 0");
  if (tupdate <= 0) throw std::invalid_argument("dualpi2: tupdate must be > 0");
  if (!(link_rate_bps > 0.0)) throw std::invalid_argument("dualpi2: link rate must be > 0");
  if (link_delay < 0 || max_burst < 0 || max_ecn_threshold < 0) {
    throw std::invalid_argument("dualpi2: delays must be >= 0");
  }
  if (buffer_limit_bytes <= 0) throw std::invalid_argument("dualpi2: buffer limit must be > 0");
}

QueueState pi_update(QueueState q, const Dualpi2Params& params, Micros now) {
  if (q.current_queue_delay < 0 || q.previous_queue_delay < 0) {
    throw SimulationFault("pi_update: negative queue delay");
  }
  const auto cur = static_cast<double>(q.current_queue_delay);
  const auto prev = static_cast<double>(q.previous_queue_delay);
  double p = q.drop_probability + params.alpha * (cur - static_cast<double>(params.qdelay_target)) +
             params.beta * (cur - prev);
  q.drop_probability = std::clamp(p, 0.0, 1.0);

  if (q.burst_allowance > 0) q.burst_allowance = std::max<Micros>(0, q.burst_allowance - params.tupdate);
  const Micros half = params.qdelay_target / 2;
  if (q.drop_probability == 0.0 && q.current_queue_delay < half && q.previous_queue_delay < half) {
    q.burst_allowance = params.max_burst;
  }
  q.previous_queue_delay = q.current_queue_delay;
  q.measurement_start_time = now;
  return q;
}

QueueClass classify_packet(const Packet& p) {
  return (p.ecn == Ecn::ECT1 || p.ecn == Ecn::CE) ? QueueClass::L4S : QueueClass::Classic;
}

double coupled_probability(const QueueState& q, const Dualpi2Params& params) {
  const double base = q.drop_probability;
  if (q.queue_type == QueueClass::L4S) return std::min(params.coupling_factor_k * base, 1.0);
  return base * base;
}

Decision aqm_decision(const QueueState& q, const Packet& p, const Dualpi2Params& params, double rng_draw) {
  if (q.length_bytes + static_cast<std::int64_t>(p.size_bytes) > params.buffer_limit_bytes) {
    return {Action::Drop, DecisionCause::BufferFull};
  }
  if (q.burst_allowance > 0) return {Action::Enqueue, DecisionCause::BurstProtected};
  const bool capable = ecn_capable(p.ecn);
  if (q.queue_type == QueueClass::L4S) {
    if (capable && q.current_queue_delay > params.max_ecn_threshold) return {Action::Mark, DecisionCause::StepMark};
  }
  if (rng_draw < coupled_probability(q, params)) {
    if (capable) return {Action::Mark, DecisionCause::ProbabilisticMark};
    return {Action::Drop, DecisionCause::ProbabilisticDrop};
  }
  return {Action::Enqueue, DecisionCause::Pass};
}

}  // namespace l4sllm::sim
