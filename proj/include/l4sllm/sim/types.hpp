#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace l4sllm::sim {

// All simulated time is integer microseconds.
using Micros = std::int64_t;

inline constexpr Micros kInfiniteMicros = std::numeric_limits<Micros>::max();

// Two-bit ECN field values.
enum class Ecn : std::uint8_t { NonECT = 0b00, ECT1 = 0b01, ECT0 = 0b10, CE = 0b11 };

enum class QueueClass : std::uint8_t { Classic = 0, L4S = 1 };

enum class Action : std::uint8_t { Enqueue = 0, Drop = 1, Mark = 2 };

inline constexpr int kActionCount = 3;

std::string_view to_string(Ecn ecn);
std::string_view to_string(QueueClass q);
std::string_view to_string(Action a);

inline bool ecn_capable(Ecn ecn) { return ecn != Ecn::NonECT; }

// Raised on simulator contract violations (time regression, negative delay,
// broken conservation). These indicate bugs, not bad input.
class SimulationFault : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Packet {
  std::uint32_t flow_id = 0;
  std::uint32_t size_bytes = 1500;
  Ecn ecn = Ecn::NonECT;
  Micros enqueue_time = 0;
  QueueClass queue_class = QueueClass::Classic;
  std::uint64_t seq = 0;
  Micros sent_time = 0;
};

struct Dualpi2Params {
  Micros qdelay_target = 15'000;
  Micros tupdate = 16'000;
  // Probability per microsecond of delay error / delay change, applied once
  // per tupdate.
  double alpha = 1.6e-7;
  double beta = 3.2e-6;
  Micros max_burst = 150'000;
  Micros max_ecn_threshold = 1'000;
  double coupling_factor_k = 2.0;
  double link_rate_bps = 8e6;
  Micros link_delay = 10'000;
  std::int64_t buffer_limit_bytes = 250'000;

  // Configuration flags as logged: bit0 ECN, bit1 L4S step marking, bit2 coupling.
  std::int64_t flags() const;
  void validate() const;
};

// Bits of QueueState::status_flags.
namespace status {
inline constexpr std::int64_t kActive = 0x1;        // queue holds packets
inline constexpr std::int64_t kBurstProtect = 0x2;  // burst allowance remaining
inline constexpr std::int64_t kOverStep = 0x4;      // delay above the step threshold
inline constexpr std::int64_t kNearFull = 0x8;      // occupancy above 90% of the buffer
}  // namespace status

struct QueueState {
  QueueClass queue_type = QueueClass::Classic;
  Micros burst_allowance = 0;
  double drop_probability = 0.0;  // the PI base probability p'
  Micros current_queue_delay = 0;
  Micros previous_queue_delay = 0;
  double accumulated_probability = 0.0;
  std::int64_t length_bytes = 0;
  std::int64_t length_packets = 0;
  std::uint64_t total_packets = 0;
  std::uint64_t total_bytes = 0;
  std::uint64_t total_drops = 0;
  Micros avg_dequeue_time = 0;
  std::uint64_t dequeue_count = 0;
  Micros measurement_start_time = 0;
  std::int64_t status_flags = 0;

  // Conservation bookkeeping (not logged).
  std::uint64_t bytes_enqueued = 0;
  std::uint64_t bytes_dequeued = 0;
  std::uint64_t bytes_dropped = 0;
  // Admitted but held back by an injected decision delay.
  std::uint64_t bytes_pending = 0;
  std::uint64_t total_marks = 0;
};

enum class DecisionCause : std::uint8_t {
  Pass,
  BurstProtected,
  BufferFull,
  ProbabilisticDrop,
  ProbabilisticMark,
  StepMark,
};

struct Decision {
  Action action = Action::Enqueue;
  DecisionCause cause = DecisionCause::Pass;
};

}  // namespace l4sllm::sim
