#pragma once

// Closed-form sender models standing in for real transport stacks. Each
// keeps just enough state to react to loss and ECN feedback deterministically.

#include <cstdint>
#include <string>
#include <string_view>

#include "l4sllm/sim/types.hpp"

namespace l4sllm::sim {

enum class FlowKind { AimdReno, CubicLike, DctcpLike, CbrUdp };
enum class EcnReaction { Halve, Proportional, None };

std::string_view to_string(FlowKind kind);
FlowKind parse_flow_kind(std::string_view name);
Ecn parse_ecn(std::string_view name);

inline constexpr std::uint32_t kMss = 1500;

struct FlowSpec {
  FlowKind kind = FlowKind::AimdReno;
  int count = 1;
  Ecn ecn = Ecn::NonECT;
  Micros start = 0;
  Micros stop = kInfiniteMicros;
  double rate_bps = 0.0;  // CbrUdp only
  std::uint32_t packet_size = kMss;

  // Default codepoint per kind: DCTCP marks ECT(1), loss-based flows Not-ECT,
  // CBR Not-ECT unless configured (ECT(1) makes it Prague-like).
  static Ecn default_ecn(FlowKind kind);
  EcnReaction ecn_reaction() const;
  void validate() const;
};

// Window / rate state for one flow instance.
class FlowModel {
 public:
  FlowModel(std::uint32_t id, const FlowSpec& spec, Micros rtt_base);

  std::uint32_t id() const { return id_; }
  FlowKind kind() const { return spec_.kind; }
  const FlowSpec& spec() const { return spec_; }
  Micros rtt_base() const { return rtt_base_; }
  double cwnd() const { return cwnd_; }
  std::int64_t inflight() const { return inflight_; }
  double dctcp_alpha() const { return dctcp_alpha_; }
  bool window_based() const { return spec_.kind != FlowKind::CbrUdp; }
  bool ecn_capable() const { return spec_.ecn != Ecn::NonECT; }

  bool can_send() const;
  // Stamps seq/flow/ecn and accounts the packet as in flight.
  Packet next_packet(Micros now);
  Micros cbr_interval() const;

  void on_ack(const Packet& p, bool ce_echo, Micros now);
  void on_loss(const Packet& p, Micros now);

 private:
  void reduce(double factor, Micros now);
  void grow(std::uint32_t acked_bytes, Micros now);

  std::uint32_t id_;
  FlowSpec spec_;
  Micros rtt_base_;
  double cwnd_;
  double ssthresh_;
  std::int64_t inflight_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t recovery_seq_ = 0;
  // DCTCP observation window.
  double dctcp_alpha_ = 1.0;
  std::uint64_t window_end_seq_ = 0;
  std::uint64_t acked_in_window_ = 0;
  std::uint64_t marked_in_window_ = 0;
  // Cubic epoch.
  double w_max_ = 0.0;
  Micros epoch_start_ = 0;
};

}  // namespace l4sllm::sim
