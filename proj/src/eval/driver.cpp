#include "l4sllm/eval/driver.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "l4sllm/pool/normalize.hpp"
#include "l4sllm/pool/pool.hpp"

namespace l4sllm::eval {

void DriverConfig::validate() const {
  if (mode == DriverMode::LlmEvery && interval < 1) throw std::invalid_argument("driver: interval must be >= 1");
}

std::string DriverConfig::describe() const {
  if (mode == DriverMode::RuleBased) return "rule";
  return "llm_every_" + std::to_string(interval) + (inject_latency ? "+latency" : "");
}

bool model_turn(const DriverConfig& cfg, std::uint64_t decision_index) {
  return cfg.mode == DriverMode::LlmEvery && (decision_index + 1) % cfg.interval == 0;
}

ModelPolicy::ModelPolicy(model::PolicyModel& model, const model::CheckpointMeta& meta, DriverConfig cfg)
    : model_(model), meta_(meta), cfg_(cfg) {
  cfg_.validate();
  if (!meta_.feature_stats.fitted) {
    throw std::invalid_argument("driver: checkpoint carries no fitted feature statistics");
  }
}

namespace {
double record_reward(const sim::KernelLogRecord& r) {
  return pool::compute_reward(static_cast<double>(r.packet_length), static_cast<double>(r.current_queue_delay / 1000));
}
}  // namespace

sim::Action ModelPolicy::infer(const sim::KernelLogRecord& record) {
  const std::size_t w = model_.config().context_window;
  pool::StateExtractor probe = extractor_;
  const pool::StateVector current = pool::normalize_state(probe.extract(record), meta_.feature_stats);

  model::WindowBatch b = model::WindowBatch::empty(1, w);
  const std::size_t have = std::min(history_.size(), w - 1);
  const std::size_t pad = w - 1 - have;
  const double rscale = meta_.feature_stats.return_scale;
  double R = meta_.target_return * rscale;
  b.returns[w - 1] = meta_.target_return;
  std::copy(current.begin(), current.end(), b.states.begin() + static_cast<long>((w - 1) * pool::kStateDim));
  for (std::size_t k = 0; k < have; ++k) {
    const std::size_t slot = w - 2 - k;
    const HistoryStep& h = history_[history_.size() - 1 - k];
    R = h.reward + meta_.gamma * R;
    b.returns[slot] = R / rscale;
    std::copy(h.state.begin(), h.state.end(), b.states.begin() + static_cast<long>(slot * pool::kStateDim));
    b.actions[slot] = h.action;
  }
  for (std::size_t s = 0; s < pad; ++s) b.valid[s] = 0.0;

  const auto t0 = std::chrono::steady_clock::now();
  const tensor::Tensor logits = model_.forward(b);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  latencies_.push_back(secs);
  ++inferences_;
  return static_cast<sim::Action>(model::argmax_action(&logits.data()[(w - 1) * 3]));
}

sim::Action ModelPolicy::decide(const sim::DecisionContext& ctx) {
  if (!model_turn(cfg_, ctx.decision_index)) return ctx.rule.action;
  const sim::Action a = infer(ctx.record);
  if (a != ctx.rule.action) ++overrides_;
  if (cfg_.inject_latency) pending_delay_ = static_cast<sim::Micros>(std::llround(latencies_.back() * 1e6));
  return a;
}

sim::Micros ModelPolicy::take_decision_delay() {
  const sim::Micros d = pending_delay_;
  pending_delay_ = 0;
  return d;
}

void ModelPolicy::observe(const sim::KernelLogRecord& record) {
  HistoryStep h;
  h.state = pool::normalize_state(extractor_.extract(record), meta_.feature_stats);
  h.reward = record_reward(record);
  h.action = static_cast<int>(record.dequeue_action);
  history_.push_back(h);
  while (history_.size() > model_.config().context_window) history_.pop_front();
}

}  // namespace l4sllm::eval
