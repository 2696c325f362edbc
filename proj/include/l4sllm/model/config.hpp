#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "l4sllm/pool/state.hpp"

namespace l4sllm::model {

inline constexpr std::size_t kTokensPerStep = 1 + pool::kStateDim + 1;  // R, s1..s8, a

struct ModelConfig {
  std::size_t state_dim = pool::kStateDim;
  std::size_t action_count = 3;
  std::size_t feature_dim = 32;
  std::size_t embed_size = 128;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t context_window = 20;
  // Highest time index; the time table has max_timestep + 1 rows.
  std::size_t max_timestep = 20;
  std::vector<std::size_t> conv_kernel_sizes = {3, 5, 7};
  std::size_t conv_channels = 4;
  std::size_t ffn_mult = 4;
  std::size_t lora_rank = 4;
  std::vector<std::string> lora_targets = {"q", "v"};
  double lora_scale = 1.0;
  bool residual_flag = true;
  // true: per-feature linear encoder; false: multi-scale causal conv path.
  std::array<bool, pool::kStateDim> scalar_feature_mask = {true, true, true, false, true, false, false, true};

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// Small configuration used by tests and quick experiments.
ModelConfig toy_config();

}  // namespace l4sllm::model
