#include "l4sllm/sim/flows.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace l4sllm::sim {

namespace {

constexpr double kInitialWindow = 10.0 * kMss;
constexpr double kMinWindow = 2.0 * kMss;
constexpr double kMaxWindow = 64.0 * 1024 * 1024;
constexpr double kCubicC = 0.4;
constexpr double kCubicBeta = 0.7;
constexpr double kDctcpGain = 1.0 / 16.0;

}  // namespace

std::string_view to_string(FlowKind kind) {
  switch (kind) {
    case FlowKind::AimdReno: return "reno";
    case FlowKind::CubicLike: return "cubic";
    case FlowKind::DctcpLike: return "dctcp";
    case FlowKind::CbrUdp: return "cbr";
  }
  return "?";
}

FlowKind parse_flow_kind(std::string_view name) {
  if (name == "reno" || name == "newreno") return FlowKind::AimdReno;
  if (name == "cubic") return FlowKind::CubicLike;
  if (name == "dctcp") return FlowKind::DctcpLike;
  if (name == "cbr" || name == "udp" || name == "prague") return FlowKind::CbrUdp;
  throw std::invalid_argument("unknown flow kind '" + std::string(name) + "'");
}

Ecn parse_ecn(std::string_view name) {
  if (name == "nonect" || name == "none") return Ecn::NonECT;
  if (name == "ect0") return Ecn::ECT0;
  if (name == "ect1") return Ecn::ECT1;
  throw std::invalid_argument("invalid sender ECN codepoint '" + std::string(name) + "' (senders never set CE)");
}

Ecn FlowSpec::default_ecn(FlowKind kind) { return kind == FlowKind::DctcpLike ? Ecn::ECT1 : Ecn::NonECT; }

EcnReaction FlowSpec::ecn_reaction() const {
  if (kind == FlowKind::CbrUdp || ecn == Ecn::NonECT) return EcnReaction::None;
  if (kind == FlowKind::DctcpLike) return EcnReaction::Proportional;
  return EcnReaction::Halve;
}

void FlowSpec::validate() const {
  if (count < 1) throw std::invalid_argument("flow: count must be >= 1");
  if (ecn == Ecn::CE) throw std::invalid_argument("flow: senders never emit CE");
  if (packet_size == 0) throw std::invalid_argument("flow: packet size must be > 0");
  if (kind == FlowKind::CbrUdp && !(rate_bps > 0.0)) throw std::invalid_argument("flow: cbr needs rate_bps > 0");
  if (stop <= start) throw std::invalid_argument("flow: stop must be after start");
}

FlowModel::FlowModel(std::uint32_t id, const FlowSpec& spec, Micros rtt_base)
    : id_(id), spec_(spec), rtt_base_(rtt_base), cwnd_(kInitialWindow), ssthresh_(kMaxWindow) {}

bool FlowModel::can_send() const {
  return window_based() && static_cast<double>(inflight_ + spec_.packet_size) <= cwnd_;
}

Micros FlowModel::cbr_interval() const {
  return std::max<Micros>(1, std::llround(spec_.packet_size * 8.0 * 1e6 / spec_.rate_bps));
}

Packet FlowModel::next_packet(Micros now) {
  Packet p;
  p.flow_id = id_;
  p.size_bytes = spec_.packet_size;
  p.ecn = spec_.ecn;
  p.seq = next_seq_++;
  p.sent_time = now;
  inflight_ += p.size_bytes;
  return p;
}

void FlowModel::reduce(double factor, Micros now) {
  if (spec_.kind == FlowKind::CubicLike) {
    w_max_ = cwnd_ / kMss;
    epoch_start_ = now;
  }
  cwnd_ = std::max(kMinWindow, cwnd_ * factor);
  ssthresh_ = cwnd_;
  recovery_seq_ = next_seq_;
}

void FlowModel::grow(std::uint32_t acked_bytes, Micros now) {
  if (cwnd_ < ssthresh_) {
    cwnd_ += acked_bytes;
  } else if (spec_.kind == FlowKind::CubicLike) {
    const double t = static_cast<double>(now - epoch_start_) / 1e6 + static_cast<double>(rtt_base_) / 1e6;
    const double k = std::cbrt(w_max_ * (1.0 - kCubicBeta) / kCubicC);
    const double target = kCubicC * std::pow(t - k, 3.0) + w_max_;
    const double w = cwnd_ / kMss;
    // At least Reno-friendly growth.
    const double step = std::max((target - w) / w, 1.0 / w);
    cwnd_ += std::max(0.0, step) * kMss * (static_cast<double>(acked_bytes) / kMss);
  } else {
    cwnd_ += static_cast<double>(kMss) * acked_bytes / cwnd_;
  }
  cwnd_ = std::min(cwnd_, kMaxWindow);
}

void FlowModel::on_ack(const Packet& p, bool ce_echo, Micros now) {
  if (!window_based()) return;
  inflight_ = std::max<std::int64_t>(0, inflight_ - p.size_bytes);
  switch (spec_.ecn_reaction()) {
    case EcnReaction::Proportional: {
      acked_in_window_ += p.size_bytes;
      if (ce_echo) marked_in_window_ += p.size_bytes;
      if (p.seq >= window_end_seq_) {
        const double fraction = acked_in_window_ ? static_cast<double>(marked_in_window_) / acked_in_window_ : 0.0;
        dctcp_alpha_ = (1.0 - kDctcpGain) * dctcp_alpha_ + kDctcpGain * fraction;
        if (marked_in_window_ > 0) reduce(1.0 - dctcp_alpha_ / 2.0, now);
        acked_in_window_ = 0;
        marked_in_window_ = 0;
        window_end_seq_ = next_seq_;
      }
      if (!ce_echo) grow(p.size_bytes, now);
      return;
    }
    case EcnReaction::Halve:
      if (ce_echo) {
        if (p.seq >= recovery_seq_) reduce(spec_.kind == FlowKind::CubicLike ? kCubicBeta : 0.5, now);
        return;
      }
      break;
    case EcnReaction::None:
      break;
  }
  grow(p.size_bytes, now);
}

void FlowModel::on_loss(const Packet& p, Micros now) {
  if (!window_based()) return;
  inflight_ = std::max<std::int64_t>(0, inflight_ - p.size_bytes);
  if (p.seq >= recovery_seq_) reduce(spec_.kind == FlowKind::CubicLike ? kCubicBeta : 0.5, now);
}

}  // namespace l4sllm::sim
