#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

#include "l4sllm/sim/klog.hpp"

namespace l4sllm::pool {

// Canonical state layout shared by the pool builder and the model.
enum class Feature : std::size_t {
  QueueType = 0,
  BurstAllowance,
  DropProbability,
  CurrentQueueDelay,
  AccumulatedProbability,
  LengthInBytes,
  TotalDropsDelta,
  PacketLength,
};

inline constexpr std::size_t kStateDim = 8;

using StateVector = std::array<double, kStateDim>;

constexpr std::size_t index(Feature f) { return static_cast<std::size_t>(f); }

const std::array<std::string_view, kStateDim>& feature_names();

// Raw state from log records. Delays and allowances are in milliseconds,
// probabilities in [0, 1], lengths in bytes. The drop feature is the change
// in the per-queue drop counter since the previous record of the same queue.
class StateExtractor {
 public:
  StateVector extract(const sim::KernelLogRecord& r);
  void reset();

 private:
  std::array<std::int64_t, 2> last_drops_{0, 0};
};

}  // namespace l4sllm::pool
