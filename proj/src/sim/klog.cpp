#include "l4sllm/sim/klog.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace l4sllm::sim {

namespace {

using Fields = std::array<std::int64_t, KernelLogRecord::kFieldCount>;

constexpr std::array<std::int64_t KernelLogRecord::*, KernelLogRecord::kFieldCount> kMembers = {
    &KernelLogRecord::queue_type,         &KernelLogRecord::qdelay_reference,
    &KernelLogRecord::tupdate,            &KernelLogRecord::max_burst,
    &KernelLogRecord::max_ecn_threshold,  &KernelLogRecord::alpha_coefficient,
    &KernelLogRecord::beta_coefficient,   &KernelLogRecord::flags,
    &KernelLogRecord::burst_allowance,    &KernelLogRecord::drop_probability,
    &KernelLogRecord::current_queue_delay, &KernelLogRecord::previous_queue_delay,
    &KernelLogRecord::accumulated_probability, &KernelLogRecord::measurement_start_time,
    &KernelLogRecord::average_dequeue_time, &KernelLogRecord::dequeue_count,
    &KernelLogRecord::status_flags,       &KernelLogRecord::total_packets,
    &KernelLogRecord::total_bytes,        &KernelLogRecord::queue_length,
    &KernelLogRecord::length_in_bytes,    &KernelLogRecord::total_drops,
    &KernelLogRecord::packet_length,      &KernelLogRecord::dequeue_action,
};

std::string kind_name(LogParseError::Kind kind) {
  switch (kind) {
    case LogParseError::Kind::FieldCount: return "field_count";
    case LogParseError::Kind::NonNumeric: return "non_numeric";
    case LogParseError::Kind::ActionRange: return "action_range";
  }
  return "?";
}

}  // namespace

const std::array<std::string_view, KernelLogRecord::kFieldCount>& klog_field_names() {
  static constexpr std::array<std::string_view, KernelLogRecord::kFieldCount> names = {
      "queue_type", "qdelay_reference", "tupdate", "max_burst", "max_ecn_threshold",
      "alpha_coefficient", "beta_coefficient", "flags", "burst_allowance", "drop_probability",
      "current_queue_delay", "previous_queue_delay", "accumulated_probability",
      "measurement_start_time", "average_dequeue_time", "dequeue_count", "status_flags",
      "total_packets", "total_bytes", "queue_length", "length_in_bytes", "total_drops",
      "packet_length", "dequeue_action"};
  return names;
}

Fields KernelLogRecord::to_array() const {
  Fields out{};
  for (std::size_t i = 0; i < kFieldCount; ++i) out[i] = this->*kMembers[i];
  return out;
}

KernelLogRecord KernelLogRecord::from_array(const Fields& fields) {
  KernelLogRecord r;
  for (std::size_t i = 0; i < kFieldCount; ++i) r.*kMembers[i] = fields[i];
  return r;
}

std::int64_t to_ppm(double probability) { return std::llround(probability * 1e6); }
double from_ppm(std::int64_t ppm) { return static_cast<double>(ppm) / 1e6; }

LogParseError::LogParseError(Kind kind, std::size_t line, const std::string& detail, const std::string& file)
    : std::runtime_error((file.empty() ? std::string("klog") : file) + " line " + std::to_string(line) + ": " +
                         kind_name(kind) + ": " + detail),
      kind_(kind),
      line_(line),
      detail_(detail) {}

std::string emit_log(const KernelLogRecord& r) {
  std::string out;
  out.reserve(160);
  char buf[24];
  const Fields f = r.to_array();
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (i) out.push_back(' ');
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, f[i]);
    out.append(buf, end);
  }
  return out;
}

KernelLogRecord parse_log(std::string_view line, std::size_t line_number) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  Fields f{};
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t next = line.find(' ', pos);
    if (next == std::string_view::npos) next = line.size();
    std::string_view token = line.substr(pos, next - pos);
    if (count >= KernelLogRecord::kFieldCount) {
      throw LogParseError(LogParseError::Kind::FieldCount, line_number, "more than 24 fields");
    }
    std::int64_t value = 0;
    auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || end != token.data() + token.size()) {
      throw LogParseError(LogParseError::Kind::NonNumeric, line_number,
                          "field " + std::to_string(count + 1) + " '" + std::string(token) + "'");
    }
    f[count++] = value;
    pos = next + 1;
  }
  if (count != KernelLogRecord::kFieldCount) {
    throw LogParseError(LogParseError::Kind::FieldCount, line_number,
                        "expected 24 fields, got " + std::to_string(count));
  }
  KernelLogRecord r = KernelLogRecord::from_array(f);
  if (r.dequeue_action < 0 || r.dequeue_action > 2) {
    throw LogParseError(LogParseError::Kind::ActionRange, line_number,
                        "action " + std::to_string(r.dequeue_action) + " not in {0,1,2}");
  }
  return r;
}

void write_klog(std::ostream& out, const std::vector<KernelLogRecord>& records) {
  for (const KernelLogRecord& r : records) out << emit_log(r) << '\n';
}

std::vector<KernelLogRecord> read_klog(std::istream& in) {
  std::vector<KernelLogRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    records.push_back(parse_log(line, number));
  }
  return records;
}

std::vector<KernelLogRecord> read_klog_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open klog '" + path + "'");
  try {
    return read_klog(in);
  } catch (const LogParseError& e) {
    throw LogParseError(e.kind(), e.line(), e.detail(), path);
  }
}

}  // namespace l4sllm::sim
