#include "l4sllm/model/config.hpp"

#include <algorithm>
#include <json.hpp>
#include <set>
#include <stdexcept>

namespace l4sllm::model {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (state_dim != pool::kStateDim) fail("state_dim must be " + std::to_string(pool::kStateDim));
  if (action_count != 3) fail("action_count must be 3");
  if (feature_dim == 0 || embed_size == 0 || n_layers == 0 || n_heads == 0) fail("sizes must be positive");
  if (embed_size % n_heads != 0) fail("embed_size must be divisible by n_heads");
  if (context_window == 0) fail("context_window must be >= 1");
  if (max_timestep + 1 < context_window) fail("max_timestep must be >= context_window - 1");
  if (conv_kernel_sizes.empty() || conv_channels == 0) fail("conv path needs kernels and channels");
  for (std::size_t k : conv_kernel_sizes) {
    if (k == 0) fail("conv kernel size must be >= 1");
  }
  if (ffn_mult == 0) fail("ffn_mult must be >= 1");
  if (lora_rank == 0) fail("lora_rank must be >= 1");
  static const std::vector<std::string> known = {"q", "k", "v", "o", "ffn1", "ffn2"};
  for (const auto& t : lora_targets) {
    if (std::find(known.begin(), known.end(), t) == known.end()) fail("unknown LoRA target '" + t + "'");
  }
}

std::string ModelConfig::to_json() const {
  json j = {{"state_dim", state_dim},
            {"action_count", action_count},
            {"feature_dim", feature_dim},
            {"embed_size", embed_size},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"context_window", context_window},
            {"max_timestep", max_timestep},
            {"conv_kernel_sizes", conv_kernel_sizes},
            {"conv_channels", conv_channels},
            {"ffn_mult", ffn_mult},
            {"lora_rank", lora_rank},
            {"lora_targets", lora_targets},
            {"lora_scale", lora_scale},
            {"residual_flag", residual_flag},
            {"scalar_feature_mask", scalar_feature_mask}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: invalid JSON: ") + e.what());
  }
  std::set<std::string> known;
  auto get = [&j, &known](const char* key, auto& field) {
    known.insert(key);
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    get("state_dim", c.state_dim);
    get("action_count", c.action_count);
    get("feature_dim", c.feature_dim);
    get("embed_size", c.embed_size);
    get("n_layers", c.n_layers);
    get("n_heads", c.n_heads);
    get("context_window", c.context_window);
    get("max_timestep", c.max_timestep);
    get("conv_kernel_sizes", c.conv_kernel_sizes);
    get("conv_channels", c.conv_channels);
    get("ffn_mult", c.ffn_mult);
    get("lora_rank", c.lora_rank);
    get("lora_targets", c.lora_targets);
    get("lora_scale", c.lora_scale);
    get("residual_flag", c.residual_flag);
    get("scalar_feature_mask", c.scalar_feature_mask);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  for (const auto& item : j.items()) {
    if (!known.count(item.key())) throw std::invalid_argument("model config: unknown key '" + item.key() + "'");
  }
  c.validate();
  return c;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.feature_dim = 16;
  c.embed_size = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.context_window = 8;
  c.max_timestep = 8;
  c.lora_rank = 2;
  return c;
}

}  // namespace l4sllm::model
