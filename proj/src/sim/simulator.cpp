#include "l4sllm/sim/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <string>

#include "l4sllm/sim/dualpi2.hpp"
#include "l4sllm/sim/flows.hpp"

namespace l4sllm::sim {

double uniform53(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

KernelLogRecord make_record(const QueueState& q, const Dualpi2Params& params, const Packet& p, Action action) {
  KernelLogRecord r;
  r.queue_type = static_cast<std::int64_t>(q.queue_type);
  r.qdelay_reference = params.qdelay_target;
  r.tupdate = params.tupdate;
  r.max_burst = params.max_burst;
  r.max_ecn_threshold = params.max_ecn_threshold;
  r.alpha_coefficient = std::llround(params.alpha * 1e9);
  r.beta_coefficient = std::llround(params.beta * 1e9);
  r.flags = params.flags();
  r.burst_allowance = q.burst_allowance;
  r.drop_probability = to_ppm(q.drop_probability);
  r.current_queue_delay = q.current_queue_delay;
  r.previous_queue_delay = q.previous_queue_delay;
  r.accumulated_probability = to_ppm(q.accumulated_probability);
  r.measurement_start_time = q.measurement_start_time;
  r.average_dequeue_time = q.avg_dequeue_time;
  r.dequeue_count = static_cast<std::int64_t>(q.dequeue_count);
  r.status_flags = q.status_flags;
  r.total_packets = static_cast<std::int64_t>(q.total_packets);
  r.total_bytes = static_cast<std::int64_t>(q.total_bytes);
  r.queue_length = q.length_packets;
  r.length_in_bytes = q.length_bytes;
  r.total_drops = static_cast<std::int64_t>(q.total_drops);
  r.packet_length = p.size_bytes;
  r.dequeue_action = static_cast<std::int64_t>(action);
  return r;
}

namespace {

enum class EventKind : std::uint8_t {
  FlowStart,
  CbrSend,
  RouterArrival,
  DeferredEnqueue,
  TxComplete,
  AckArrival,
  LossNotify,
  PiUpdate,
};

struct Event {
  Micros time;
  std::uint64_t seq;
  EventKind kind;
  std::uint32_t flow;
  Packet packet;
};

struct EventLater {
  bool operator()(const Event& a, const Event& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

std::size_t index_of(QueueClass c) { return static_cast<std::size_t>(c); }

class World {
 public:
  World(const ScenarioConfig& config, const RunOptions& options)
      : cfg_(config), params_(config.aqm), options_(options), aqm_rng_(config.seed),
        start_rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
    queues_[0].queue_type = QueueClass::Classic;
    queues_[1].queue_type = QueueClass::L4S;
    ctrl_.burst_allowance = params_.max_burst;
    for (auto& q : queues_) q.burst_allowance = params_.max_burst;
    quantum_[0] = static_cast<double>(kMss);
    quantum_[1] = config.l4s_weight * kMss;

    const Micros rtt = 2 * (config.access_delay + params_.link_delay);
    std::uniform_int_distribution<Micros> jitter(0, std::max<Micros>(0, config.start_jitter - 1));
    for (const FlowSpec& spec : config.flows) {
      for (int i = 0; i < spec.count; ++i) {
        const auto id = static_cast<std::uint32_t>(flows_.size());
        flows_.emplace_back(id, spec, rtt);
        const Micros offset = config.start_jitter > 0 ? jitter(start_rng_) : 0;
        push({spec.start + offset, 0, EventKind::FlowStart, id, {}});
      }
    }
    trace_.util_bin = config.util_bin;
    trace_.delivered_bytes.assign(static_cast<std::size_t>((config.duration + config.util_bin - 1) / config.util_bin), 0.0);
    trace_.flow_delivered_bytes.assign(flows_.size(), 0);
    push({params_.tupdate, 0, EventKind::PiUpdate, 0, {}});
  }

  RunTrace run() {
    while (!events_.empty()) {
      Event e = events_.top();
      if (e.time > cfg_.duration) break;
      events_.pop();
      if (e.time < now_) {
        throw SimulationFault("event time regression: " + std::to_string(e.time) + " < " + std::to_string(now_));
      }
      now_ = e.time;
      ++trace_.events;
      dispatch(e);
    }
    if (options_.check_invariants) check_invariants();
    trace_.final_queues = queues_;
    return std::move(trace_);
  }

 private:
  void push(Event e) {
    e.seq = next_seq_++;
    events_.push(std::move(e));
  }

  void dispatch(const Event& e) {
    switch (e.kind) {
      case EventKind::FlowStart: {
        FlowModel& f = flows_[e.flow];
        if (f.window_based()) pump(f);
        else send(f);
        break;
      }
      case EventKind::CbrSend: send(flows_[e.flow]); break;
      case EventKind::RouterArrival: arrive(e.packet); break;
      case EventKind::DeferredEnqueue: deferred_enqueue(e.packet); break;
      case EventKind::TxComplete: tx_complete(e.packet); break;
      case EventKind::AckArrival: {
        FlowModel& f = flows_[e.packet.flow_id];
        f.on_ack(e.packet, e.packet.ecn == Ecn::CE, now_);
        pump(f);
        break;
      }
      case EventKind::LossNotify: {
        FlowModel& f = flows_[e.packet.flow_id];
        f.on_loss(e.packet, now_);
        pump(f);
        break;
      }
      case EventKind::PiUpdate: pi_tick(); break;
    }
  }

  bool active(const FlowModel& f) const { return now_ < f.spec().stop; }

  void pump(FlowModel& f) {
    if (!f.window_based()) return;
    while (active(f) && f.can_send()) emit(f);
  }

  void send(FlowModel& f) {
    if (!active(f)) return;
    emit(f);
    push({now_ + f.cbr_interval(), 0, EventKind::CbrSend, f.id(), {}});
  }

  void emit(FlowModel& f) {
    Packet p = f.next_packet(now_);
    push({now_ + cfg_.access_delay, 0, EventKind::RouterArrival, f.id(), p});
  }

  Micros head_delay(std::size_t i) const {
    return buffers_[i].empty() ? 0 : now_ - buffers_[i].front().enqueue_time;
  }

  std::int64_t status_of(const QueueState& q) const {
    std::int64_t s = 0;
    if (q.length_packets > 0) s |= status::kActive;
    if (q.burst_allowance > 0) s |= status::kBurstProtect;
    if (q.current_queue_delay > params_.max_ecn_threshold) s |= status::kOverStep;
    if (q.length_bytes * 10 > params_.buffer_limit_bytes * 9) s |= status::kNearFull;
    return s;
  }

  void arrive(Packet p) {
    const QueueClass cls = classify_packet(p);
    const std::size_t qi = index_of(cls);
    QueueState& q = queues_[qi];
    p.queue_class = cls;
    p.enqueue_time = now_;
    q.current_queue_delay = head_delay(qi);
    q.total_packets += 1;
    q.total_bytes += p.size_bytes;
    q.status_flags = status_of(q);

    const double draw = uniform53(aqm_rng_);
    const Decision rule = aqm_decision(q, p, params_, draw);
    KernelLogRecord record = make_record(q, params_, p, Action::Enqueue);
    Action action = rule.action;
    if (options_.policy != nullptr) {
      const DecisionContext ctx{record, p, q, params_, draw, rule, now_, trace_.decisions};
      action = options_.policy->decide(ctx);
      if (static_cast<int>(action) >= kActionCount) {
        throw SimulationFault("policy returned an invalid action");
      }
    }
    if (rule.cause == DecisionCause::BufferFull) {
      if (action != Action::Drop) ++trace_.forced_drops;
      action = Action::Drop;
    }
    if (action == Action::Mark && !ecn_capable(p.ecn)) {
      ++trace_.policy_violations;
      action = Action::Drop;
    }
    record.dequeue_action = static_cast<std::int64_t>(action);
    ++trace_.decisions;
    ++trace_.action_counts[static_cast<std::size_t>(action)];

    q.accumulated_probability += coupled_probability(q, params_);
    const Micros delay = options_.policy != nullptr ? options_.policy->take_decision_delay() : 0;
    switch (action) {
      case Action::Drop:
        q.accumulated_probability = 0.0;
        drop(q, p);
        break;
      case Action::Mark:
        if (!ecn_capable(p.ecn)) throw SimulationFault("mark applied to a Not-ECT packet");
        q.accumulated_probability = 0.0;
        q.total_marks += 1;
        p.ecn = Ecn::CE;
        [[fallthrough]];
      case Action::Enqueue:
        if (delay > 0) {
          q.bytes_pending += p.size_bytes;
          push({now_ + delay, 0, EventKind::DeferredEnqueue, p.flow_id, p});
        } else {
          enqueue(qi, p);
        }
        break;
    }
    if (options_.sink) options_.sink(record);
    if (options_.policy != nullptr) options_.policy->observe(record);
    if (!link_busy_) start_tx();
  }

  void drop(QueueState& q, const Packet& p) {
    q.total_drops += 1;
    q.bytes_dropped += p.size_bytes;
    const Micros notice = 2 * params_.link_delay + cfg_.access_delay;
    push({now_ + notice, 0, EventKind::LossNotify, p.flow_id, p});
  }

  void enqueue(std::size_t qi, Packet p) {
    QueueState& q = queues_[qi];
    p.enqueue_time = now_;
    buffers_[qi].push_back(p);
    q.length_bytes += p.size_bytes;
    q.length_packets += 1;
    q.bytes_enqueued += p.size_bytes;
  }

  void deferred_enqueue(const Packet& p) {
    const std::size_t qi = index_of(p.queue_class);
    QueueState& q = queues_[qi];
    q.bytes_pending -= p.size_bytes;
    if (q.length_bytes + static_cast<std::int64_t>(p.size_bytes) > params_.buffer_limit_bytes) {
      ++trace_.forced_drops;
      drop(q, p);
    } else {
      enqueue(qi, p);
    }
    if (!link_busy_) start_tx();
  }

  int pick_queue() {
    const bool c = !buffers_[0].empty();
    const bool l = !buffers_[1].empty();
    if (!c && !l) return -1;
    if (c != l) {
      const int only = c ? 0 : 1;
      deficit_[1 - only] = 0.0;
      return only;
    }
    while (true) {
      const auto i = static_cast<std::size_t>(drr_current_);
      const double head = buffers_[i].front().size_bytes;
      if (deficit_[i] >= head) {
        deficit_[i] -= head;
        return drr_current_;
      }
      drr_current_ = 1 - drr_current_;
      deficit_[static_cast<std::size_t>(drr_current_)] += quantum_[static_cast<std::size_t>(drr_current_)];
    }
  }

  void start_tx() {
    const int pick = pick_queue();
    if (pick < 0) return;
    const auto qi = static_cast<std::size_t>(pick);
    Packet p = buffers_[qi].front();
    buffers_[qi].pop_front();
    QueueState& q = queues_[qi];
    const Micros sojourn = now_ - p.enqueue_time;
    if (sojourn < 0) throw SimulationFault("negative sojourn time");
    q.length_bytes -= p.size_bytes;
    q.length_packets -= 1;
    q.bytes_dequeued += p.size_bytes;
    q.dequeue_count += 1;
    q.avg_dequeue_time = q.dequeue_count == 1 ? sojourn : q.avg_dequeue_time + (sojourn - q.avg_dequeue_time) / 8;
    q.current_queue_delay = sojourn;
    trace_.sojourns.push_back({now_, sojourn, q.queue_type});
    const auto tx = static_cast<Micros>(std::ceil(p.size_bytes * 8.0 * 1e6 / params_.link_rate_bps));
    link_busy_ = true;
    push({now_ + std::max<Micros>(1, tx), 0, EventKind::TxComplete, p.flow_id, p});
  }

  void tx_complete(const Packet& p) {
    link_busy_ = false;
    const Micros at_sink = now_ + params_.link_delay;
    if (at_sink <= cfg_.duration) {
      // Spread the bytes over the bins the last bit's wire time covers.
      const Micros tx = std::max<Micros>(1, static_cast<Micros>(std::ceil(p.size_bytes * 8.0 * 1e6 / params_.link_rate_bps)));
      Micros from = at_sink - tx;
      while (from < at_sink) {
        const Micros edge = std::min(at_sink, (from / cfg_.util_bin + 1) * cfg_.util_bin);
        const auto bin = static_cast<std::size_t>(from / cfg_.util_bin);
        if (from >= 0 && bin < trace_.delivered_bytes.size()) {
          trace_.delivered_bytes[bin] += static_cast<double>(p.size_bytes) * static_cast<double>(edge - from) / static_cast<double>(tx);
        }
        from = edge;
      }
      trace_.flow_delivered_bytes[p.flow_id] += p.size_bytes;
    }
    push({at_sink + params_.link_delay + cfg_.access_delay, 0, EventKind::AckArrival, p.flow_id, p});
    start_tx();
  }

  void pi_tick() {
    const Micros dc = head_delay(0);
    const Micros dl = head_delay(1);
    ctrl_.current_queue_delay = std::max(dc, dl);
    ctrl_ = pi_update(ctrl_, params_, now_);
    const Micros own[2] = {dc, dl};
    for (std::size_t i = 0; i < 2; ++i) {
      QueueState& q = queues_[i];
      q.drop_probability = ctrl_.drop_probability;
      q.burst_allowance = ctrl_.burst_allowance;
      q.measurement_start_time = now_;
      q.previous_queue_delay = q.current_queue_delay;
      q.current_queue_delay = own[i];
      q.status_flags = status_of(q);
    }
    trace_.probability.emplace_back(now_, ctrl_.drop_probability);
    if (options_.check_invariants) check_invariants();
    push({now_ + params_.tupdate, 0, EventKind::PiUpdate, 0, {}});
  }

  void check_invariants() const {
    if (!(ctrl_.drop_probability >= 0.0 && ctrl_.drop_probability <= 1.0)) {
      throw SimulationFault("probability left [0, 1]");
    }
    for (const QueueState& q : queues_) {
      if (q.total_bytes != q.bytes_enqueued + q.bytes_dropped + q.bytes_pending) throw SimulationFault("arrival bytes not conserved");
      if (static_cast<std::uint64_t>(q.length_bytes) != q.bytes_enqueued - q.bytes_dequeued) {
        throw SimulationFault("queue length disagrees with enqueued - dequeued");
      }
      if (q.length_bytes > params_.buffer_limit_bytes) throw SimulationFault("buffer limit exceeded");
      if (q.current_queue_delay < 0) throw SimulationFault("negative queue delay");
    }
  }

  const ScenarioConfig& cfg_;
  const Dualpi2Params& params_;
  const RunOptions& options_;
  std::mt19937_64 aqm_rng_;
  std::mt19937_64 start_rng_;
  std::priority_queue<Event, std::vector<Event>, EventLater> events_;
  std::uint64_t next_seq_ = 0;
  Micros now_ = 0;
  std::vector<FlowModel> flows_;
  std::array<std::deque<Packet>, 2> buffers_;
  std::array<QueueState, 2> queues_{};
  QueueState ctrl_;
  std::array<double, 2> deficit_{0.0, 0.0};
  std::array<double, 2> quantum_{0.0, 0.0};
  int drr_current_ = 0;
  bool link_busy_ = false;
  RunTrace trace_;
};

}  // namespace

Simulator::Simulator(ScenarioConfig config) : config_(std::move(config)) { config_.validate(); }

RunTrace Simulator::run(const RunOptions& options) const {
  World world(config_, options);
  return world.run();
}

std::vector<KernelLogRecord> run_scenario(const ScenarioConfig& config, RunTrace* trace) {
  std::vector<KernelLogRecord> records;
  RunOptions options;
  options.sink = [&records](const KernelLogRecord& r) { records.push_back(r); };
  RunTrace t = Simulator(config).run(options);
  if (trace != nullptr) *trace = std::move(t);
  return records;
}

}  // namespace l4sllm::sim
