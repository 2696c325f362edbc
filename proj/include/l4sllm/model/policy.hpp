#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "l4sllm/model/config.hpp"
#include "l4sllm/model/layers.hpp"
#include "l4sllm/model/lora.hpp"

namespace l4sllm::model {

// A batch of context windows, flattened row-major over [batch, w].
struct WindowBatch {
  std::size_t batch = 0;
  std::size_t window = 0;
  std::vector<double> returns;       // [B*w], already scaled
  std::vector<double> states;        // [B*w*8], normalized
  std::vector<int> actions;          // [B*w]
  std::vector<std::size_t> timesteps;  // [B*w]
  std::vector<double> valid;         // [B*w], 0 marks left padding
  std::vector<double> time_visible;  // [B*w], 0 hides the time embedding

  // Zero-filled batch with every step valid and timesteps 0..w-1.
  static WindowBatch empty(std::size_t batch, std::size_t window);
  void validate(std::size_t state_dim) const;
};

// Pre-LN GPT block: x + Attn(LN(x)), then + FFN(LN(.)).
class TransformerBlock {
 public:
  TransformerBlock(const std::string& name, const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, const tensor::AttentionMask& mask) const;
  void collect(std::vector<Parameter*>& out);
  // Linear layers addressable as LoRA targets: q, k, v, o, ffn1, ffn2.
  LoraLinear& target(const std::string& which);

 private:
  std::size_t heads_;
  LayerNorm ln1_;
  LoraLinear q_, k_, v_, o_;
  LayerNorm ln2_;
  LoraLinear ffn1_, ffn2_;
};

struct SequenceEmbedding {
  Tensor modality;    // [B, 10w, d] token projections, padding zeroed
  Tensor with_time;   // modality + time embeddings
  Tensor normalized;  // after the pre-backbone layer norm
  tensor::AttentionMask mask;
};

struct LoraSummary {
  std::size_t wrapped_matrices = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
};

class PolicyModel {
 public:
  PolicyModel(ModelConfig config, std::uint64_t seed);
  PolicyModel(const PolicyModel&) = delete;
  PolicyModel& operator=(const PolicyModel&) = delete;

  const ModelConfig& config() const { return config_; }

  // states:[B, w, 8] -> 8 tensors [B, w, d].
  std::vector<Tensor> encode_state(const Tensor& states) const;
  SequenceEmbedding build_sequence(const WindowBatch& batch) const;
  // Logits [B, w, 3]; step t is read at its last state token.
  Tensor forward(const WindowBatch& batch) const;
  // Backbone output [B, 10w, d] for a given input sequence.
  Tensor backbone(const Tensor& x, const tensor::AttentionMask& mask) const;
  Tensor block_forward(std::size_t layer, const Tensor& x, const tensor::AttentionMask& mask) const;

  std::uint64_t forward_count() const { return forward_count_; }
  void reset_forward_count() { forward_count_ = 0; }

  // Wraps the configured targets of every block and freezes the backbone
  // base weights. Returns false if the rank is not below the matrix sizes.
  bool enable_lora(std::uint64_t seed);
  bool lora_enabled() const { return lora_enabled_; }
  LoraSummary lora_summary() const;
  // Folds every delta into its base weight (deployment form).
  void merge_lora();

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  std::vector<Parameter*> backbone_base_parameters();
  std::size_t layer_count() const { return blocks_.size(); }
  TransformerBlock& block(std::size_t i) { return *blocks_.at(i); }

  Parameter& time_table() { return time_; }

 private:
  ModelConfig config_;
  // Per feature: scalar encoder, or one conv kernel set per size plus a
  // projection of the concatenated channels.
  struct FeatureEncoder {
    bool scalar = true;
    Linear lin;
    std::vector<Parameter> kernels;
    std::vector<Parameter> conv_bias;
    Linear conv_proj;
    Linear to_embed;
  };
  std::vector<FeatureEncoder> encoders_;
  Linear return_embed_;
  Linear action_embed_;
  Parameter time_;
  LayerNorm ln_in_;
  std::vector<std::unique_ptr<TransformerBlock>> blocks_;
  LayerNorm ln_out_;
  Linear head_;
  bool lora_enabled_ = false;
  mutable std::uint64_t forward_count_ = 0;
};

// Tie-break toward the lowest index.
int argmax_action(const double* logits, std::size_t count = 3);

}  // namespace l4sllm::model
