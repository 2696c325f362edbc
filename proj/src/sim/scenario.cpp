#include "l4sllm/sim/scenario.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace l4sllm::sim {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::int64_t to_int(const std::string& key, const std::string& value) {
  std::int64_t out = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ScenarioError("scenario: '" + key + "' expects an integer, got '" + value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return out;
  } catch (const std::exception&) {
    throw ScenarioError("scenario: '" + key + "' expects a number, got '" + value + "'");
  }
}

Micros to_micros_or_inf(const std::string& key, const std::string& value) {
  if (value == "inf") return kInfiniteMicros;
  return to_int(key, value);
}

FlowSpec parse_flow(const std::string& value) {
  std::istringstream in(value);
  std::string kind;
  in >> kind;
  FlowSpec spec;
  try {
    spec.kind = parse_flow_kind(kind);
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  spec.ecn = FlowSpec::default_ecn(spec.kind);
  std::string opt;
  while (in >> opt) {
    const auto eq = opt.find('=');
    if (eq == std::string::npos) throw ScenarioError("scenario: flow option '" + opt + "' is not key=value");
    const std::string k = opt.substr(0, eq);
    const std::string v = opt.substr(eq + 1);
    if (k == "count") {
      spec.count = static_cast<int>(to_int(k, v));
    } else if (k == "ecn") {
      try {
        spec.ecn = parse_ecn(v);
      } catch (const std::exception& e) {
        throw ScenarioError(std::string("scenario: ") + e.what());
      }
    } else if (k == "start_ms") {
      spec.start = to_int(k, v) * 1000;
    } else if (k == "stop_ms") {
      spec.stop = to_int(k, v) * 1000;
    } else if (k == "rate_bps") {
      spec.rate_bps = to_double(k, v);
    } else if (k == "size") {
      spec.packet_size = static_cast<std::uint32_t>(to_int(k, v));
    } else {
      throw ScenarioError("scenario: unknown flow option '" + k + "'");
    }
  }
  return spec;
}

std::string micros_text(Micros v) { return v == kInfiniteMicros ? "inf" : std::to_string(v); }

}  // namespace

void ScenarioConfig::validate() const {
  try {
    aqm.validate();
    for (const FlowSpec& f : flows) f.validate();
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("scenario: ") + e.what());
  }
  if (duration <= 0) throw ScenarioError("scenario: duration must be > 0");
  if (access_delay < 0) throw ScenarioError("scenario: access delay must be >= 0");
  if (start_jitter < 0) throw ScenarioError("scenario: start jitter must be >= 0");
  if (!(l4s_weight > 0.0)) throw ScenarioError("scenario: l4s_weight must be > 0");
  if (util_bin <= 0) throw ScenarioError("scenario: util_bin must be > 0");
  if (flows.empty()) throw ScenarioError("scenario: at least one flow is required");
}

ScenarioConfig default_scenario() {
  ScenarioConfig c;
  c.name = "default";
  FlowSpec cubic;
  cubic.kind = FlowKind::CubicLike;
  cubic.count = 2;
  FlowSpec reno;
  reno.kind = FlowKind::AimdReno;
  reno.count = 2;
  FlowSpec dctcp;
  dctcp.kind = FlowKind::DctcpLike;
  dctcp.ecn = Ecn::ECT1;
  c.flows = {cubic, reno, dctcp};
  return c;
}

ScenarioConfig builtin_scenario(const std::string& name) {
  ScenarioConfig c = default_scenario();
  if (name == "default") return c;
  FlowSpec cbr;
  cbr.kind = FlowKind::CbrUdp;
  cbr.ecn = Ecn::NonECT;
  if (name == "overload") {
    c.name = "overload";
    cbr.rate_bps = 2.0 * c.aqm.link_rate_bps;
    c.flows = {cbr};
    c.duration = 10'000'000;
    return c;
  }
  if (name == "underload") {
    c.name = "underload";
    cbr.rate_bps = 0.5 * c.aqm.link_rate_bps;
    c.flows = {cbr};
    c.duration = 10'000'000;
    c.aqm.buffer_limit_bytes = 10'000'000;
    return c;
  }
  throw ScenarioError("unknown built-in scenario '" + name + "'");
}

ScenarioConfig parse_scenario(std::istream& in) {
  ScenarioConfig c;
  c.flows = default_scenario().flows;
  bool own_flows = false;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ScenarioError("scenario line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "name") c.name = value;
      else if (key == "seed") c.seed = static_cast<std::uint64_t>(to_int(key, value));
      else if (key == "duration_ms") c.duration = to_int(key, value) * 1000;
      else if (key == "duration_us") c.duration = to_int(key, value);
      else if (key == "access_delay_us") c.access_delay = to_int(key, value);
      else if (key == "start_jitter_us") c.start_jitter = to_int(key, value);
      else if (key == "l4s_weight") c.l4s_weight = to_double(key, value);
      else if (key == "util_bin_us") c.util_bin = to_int(key, value);
      else if (key == "link_rate_bps") c.aqm.link_rate_bps = to_double(key, value);
      else if (key == "link_delay_us") c.aqm.link_delay = to_int(key, value);
      else if (key == "buffer_limit_bytes") c.aqm.buffer_limit_bytes = to_int(key, value);
      else if (key == "qdelay_target_us") c.aqm.qdelay_target = to_int(key, value);
      else if (key == "tupdate_us") c.aqm.tupdate = to_int(key, value);
      else if (key == "alpha") c.aqm.alpha = to_double(key, value);
      else if (key == "beta") c.aqm.beta = to_double(key, value);
      else if (key == "max_burst_us") c.aqm.max_burst = to_int(key, value);
      else if (key == "max_ecn_threshold_us") c.aqm.max_ecn_threshold = to_micros_or_inf(key, value);
      else if (key == "coupling_k") c.aqm.coupling_factor_k = to_double(key, value);
      else if (key == "flow") {
        if (!own_flows) c.flows.clear();
        own_flows = true;
        c.flows.push_back(parse_flow(value));
      }
      else throw ScenarioError("scenario: unknown key '" + key + "'");
    } catch (const ScenarioError& e) {
      throw ScenarioError("scenario line " + std::to_string(number) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::string& path_or_name) {
  if (!std::filesystem::exists(path_or_name)) return builtin_scenario(path_or_name);
  std::ifstream in(path_or_name);
  if (!in) throw ScenarioError("cannot open scenario '" + path_or_name + "'");
  return parse_scenario(in);
}

std::string scenario_to_text(const ScenarioConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "name = " << c.name << '\n'
      << "seed = " << c.seed << '\n'
      << "duration_us = " << c.duration << '\n'
      << "access_delay_us = " << c.access_delay << '\n'
      << "start_jitter_us = " << c.start_jitter << '\n'
      << "l4s_weight = " << c.l4s_weight << '\n'
      << "util_bin_us = " << c.util_bin << '\n'
      << "link_rate_bps = " << c.aqm.link_rate_bps << '\n'
      << "link_delay_us = " << c.aqm.link_delay << '\n'
      << "buffer_limit_bytes = " << c.aqm.buffer_limit_bytes << '\n'
      << "qdelay_target_us = " << c.aqm.qdelay_target << '\n'
      << "tupdate_us = " << c.aqm.tupdate << '\n'
      << "alpha = " << c.aqm.alpha << '\n'
      << "beta = " << c.aqm.beta << '\n'
      << "max_burst_us = " << c.aqm.max_burst << '\n'
      << "max_ecn_threshold_us = " << micros_text(c.aqm.max_ecn_threshold) << '\n'
      << "coupling_k = " << c.aqm.coupling_factor_k << '\n';
  for (const FlowSpec& f : c.flows) {
    out << "flow = " << to_string(f.kind) << " count=" << f.count << " ecn=" << to_string(f.ecn)
        << " start_ms=" << f.start / 1000;
    if (f.stop != kInfiniteMicros) out << " stop_ms=" << f.stop / 1000;
    if (f.kind == FlowKind::CbrUdp) out << " rate_bps=" << f.rate_bps;
    out << " size=" << f.packet_size << '\n';
  }
  return out.str();
}

std::uint64_t scenario_hash(const ScenarioConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : scenario_to_text(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace l4sllm::sim
