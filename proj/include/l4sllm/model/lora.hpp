#pragma once

#include <cstddef>
#include <optional>

#include "l4sllm/model/layers.hpp"

namespace l4sllm::model {

// A linear map whose frozen base can carry a low-rank delta:
// y = x W0 + b + scale (x A) B, with A:[in, r] random and B:[r, out] zero.
class LoraLinear {
 public:
  LoraLinear() = default;
  LoraLinear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double init_scale = 1.0);

  // Freezes W0 and b and attaches fresh factors. Ranks at or above
  // min(in, out) are accepted (returns false as a "not low-rank" warning).
  bool wrap(std::size_t rank, double scale, Rng& rng);
  bool wrapped() const { return lora_a_.has_value(); }

  Tensor forward(const Tensor& x) const;
  // Dense W0 + scale A B.
  Tensor merge() const;
  // Replaces W0 by the merged weight and drops the factors.
  void fold();

  std::size_t trainable_count() const;
  std::size_t frozen_count() const;
  void collect(std::vector<Parameter*>& out);

  Linear& base() { return base_; }
  const Linear& base() const { return base_; }
  Parameter* lora_a() { return lora_a_ ? &*lora_a_ : nullptr; }
  Parameter* lora_b() { return lora_b_ ? &*lora_b_ : nullptr; }
  double scale() const { return scale_; }

 private:
  std::string name_;
  Linear base_;
  std::optional<Parameter> lora_a_;
  std::optional<Parameter> lora_b_;
  double scale_ = 1.0;
};

}  // namespace l4sllm::model
