#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "l4sllm/pool/state.hpp"
#include "l4sllm/sim/klog.hpp"

namespace l4sllm::pool {

class PoolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Step {
  double reward = 0.0;
  StateVector state{};
  int action = 0;
  bool done = false;
  double return_to_go = 0.0;
  bool augmented = false;
  // Set by timestep dropout: the trainer hides this step's time index.
  bool masked = false;
};

struct Trajectory {
  std::string source;
  std::vector<Step> steps;
};

struct FeatureStats {
  std::array<double, kStateDim> mean{};
  std::array<double, kStateDim> stddev{};
  std::array<bool, kStateDim> zero_variance{};
  // Returns are divided by this before they reach the model.
  double return_scale = 1.0;
  bool fitted = false;
};

struct Provenance {
  std::vector<std::string> sources;
  std::uint64_t seed = 0;
  std::string config_hash;
};

struct ExperiencePool {
  double gamma = 0.95;
  FeatureStats feature_stats;
  bool normalized = false;
  Provenance provenance;
  std::vector<Trajectory> trajectories;

  std::size_t step_count() const;
  // Throws PoolError naming the first inconsistency.
  void validate() const;
};

enum class RewardMode {
  // pkt_len / (qdelay_ms + 1), with the delay of the same record.
  DelayPlusOne,
  // pkt_len / max(qdelay_ms of the next record, 1).
  NextDelay,
};

// qdelay_ms >= 0, packet_length > 0.
double compute_reward(double packet_length, double queue_delay_ms);

// R_t = r_t + gamma R_{t+1}; empty input is rejected.
std::vector<double> returns_to_go(std::span<const double> rewards, double gamma);

struct BuildOptions {
  double gamma = 0.95;
  RewardMode reward = RewardMode::DelayPlusOne;
};

// One trajectory per run; done is set on the final record.
Trajectory build_trajectory(const std::vector<sim::KernelLogRecord>& records, const BuildOptions& options,
                            const std::string& source = "");
// Files are processed in sorted-name order.
ExperiencePool build_pool(std::vector<std::string> log_files, const BuildOptions& options);

void write_pool(std::ostream& out, const ExperiencePool& pool);
ExperiencePool read_pool(std::istream& in);
void save_pool(const std::string& path, const ExperiencePool& pool);
ExperiencePool load_pool(const std::string& path);

std::array<std::uint64_t, 3> action_histogram(const ExperiencePool& pool);

}  // namespace l4sllm::pool
