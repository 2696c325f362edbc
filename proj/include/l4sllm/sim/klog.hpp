#pragma once

// Kernel-style decision log: one record per AQM decision, 24 base-10 integer
// fields separated by single spaces, one record per line (`.klog`).
//
// Units: times in microseconds; probabilities as fixed-point parts per
// million; alpha/beta as parts per million of probability per millisecond.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace l4sllm::sim {

struct KernelLogRecord {
  std::int64_t queue_type = 0;
  std::int64_t qdelay_reference = 0;
  std::int64_t tupdate = 0;
  std::int64_t max_burst = 0;
  std::int64_t max_ecn_threshold = 0;
  std::int64_t alpha_coefficient = 0;
  std::int64_t beta_coefficient = 0;
  std::int64_t flags = 0;
  std::int64_t burst_allowance = 0;
  std::int64_t drop_probability = 0;
  std::int64_t current_queue_delay = 0;
  std::int64_t previous_queue_delay = 0;
  std::int64_t accumulated_probability = 0;
  std::int64_t measurement_start_time = 0;
  std::int64_t average_dequeue_time = 0;
  std::int64_t dequeue_count = 0;
  std::int64_t status_flags = 0;
  std::int64_t total_packets = 0;
  std::int64_t total_bytes = 0;
  std::int64_t queue_length = 0;
  std::int64_t length_in_bytes = 0;
  std::int64_t total_drops = 0;
  std::int64_t packet_length = 0;
  std::int64_t dequeue_action = 0;

  static constexpr std::size_t kFieldCount = 24;

  std::array<std::int64_t, kFieldCount> to_array() const;
  static KernelLogRecord from_array(const std::array<std::int64_t, kFieldCount>& fields);

  bool operator==(const KernelLogRecord&) const = default;
};

// Field names in log order.
const std::array<std::string_view, KernelLogRecord::kFieldCount>& klog_field_names();

std::int64_t to_ppm(double probability);
double from_ppm(std::int64_t ppm);

class LogParseError : public std::runtime_error {
 public:
  enum class Kind { FieldCount, NonNumeric, ActionRange };
  LogParseError(Kind kind, std::size_t line, const std::string& detail, const std::string& file = "");
  Kind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  Kind kind_;
  std::size_t line_;
  std::string detail_;
};

std::string emit_log(const KernelLogRecord& r);
KernelLogRecord parse_log(std::string_view line, std::size_t line_number = 1);

void write_klog(std::ostream& out, const std::vector<KernelLogRecord>& records);
// Blank lines are skipped; errors carry 1-based line numbers.
std::vector<KernelLogRecord> read_klog(std::istream& in);
std::vector<KernelLogRecord> read_klog_file(const std::string& path);

}  // namespace l4sllm::sim
