#pragma once

// Binary checkpoint layout (little-endian):
//   magic "L4SLLMCK" | u32 version | u64 n + n bytes of JSON metadata |
//   u64 tensor count | per tensor: u32 name length, name, u8 frozen,
//   u32 rank, u64 dims[rank], f64 values[numel] | u64 FNV-1a of all prior bytes.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include "l4sllm/model/policy.hpp"
#include "l4sllm/pool/pool.hpp"

namespace l4sllm::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, Corrupt, Version, Mismatch };
  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointMeta {
  pool::FeatureStats feature_stats;
  double gamma = 0.95;
  // Scaled return requested at deployment.
  double target_return = 0.0;
  std::string source_pool;
};

struct LoadedCheckpoint {
  std::unique_ptr<PolicyModel> model;
  CheckpointMeta meta;
  std::uint64_t hash = 0;  // FNV-1a of the full file
};

std::string serialize_checkpoint(PolicyModel& model, const CheckpointMeta& meta);
LoadedCheckpoint deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const std::string& path, PolicyModel& model, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::string& path);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ULL);
// Hash over the named parameter values, for freeze checks.
std::uint64_t parameter_hash(const std::vector<Parameter*>& params);

}  // namespace l4sllm::model
