#include "l4sllm/pool/state.hpp"

#include <stdexcept>

namespace l4sllm::pool {

const std::array<std::string_view, kStateDim>& feature_names() {
  static const std::array<std::string_view, kStateDim> names = {
      "queue_type",      "burst_allowance", "drop_probability",  "current_queue_delay",
      "accumulated_probability", "length_in_bytes", "total_drops_delta", "packet_length",
  };
  return names;
}

StateVector StateExtractor::extract(const sim::KernelLogRecord& r) {
  if (r.queue_type != 0 && r.queue_type != 1) throw std::invalid_argument("record has unknown queue_type");
  auto& last = last_drops_[static_cast<std::size_t>(r.queue_type)];
  const std::int64_t delta = r.total_drops - last;
  last = r.total_drops;
  StateVector s{};
  s[index(Feature::QueueType)] = static_cast<double>(r.queue_type);
  s[index(Feature::BurstAllowance)] = static_cast<double>(r.burst_allowance) / 1000.0;
  s[index(Feature::DropProbability)] = sim::from_ppm(r.drop_probability);
  s[index(Feature::CurrentQueueDelay)] = static_cast<double>(r.current_queue_delay) / 1000.0;
  s[index(Feature::AccumulatedProbability)] = sim::from_ppm(r.accumulated_probability);
  s[index(Feature::LengthInBytes)] = static_cast<double>(r.length_in_bytes);
  s[index(Feature::TotalDropsDelta)] = static_cast<double>(delta);
  s[index(Feature::PacketLength)] = static_cast<double>(r.packet_length);
  return s;
}

void StateExtractor::reset() { last_drops_ = {0, 0}; }

}  // namespace l4sllm::pool
