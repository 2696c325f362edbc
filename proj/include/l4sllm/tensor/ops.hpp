#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "l4sllm/tensor/tensor.hpp"

namespace l4sllm::tensor {

// Elementwise. `b` must match `a` or a trailing suffix of its shape
// (broadcast over the leading dimensions, e.g. a bias vector).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

// x:[..., in] times W:[in, out].
Tensor matmul(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

enum class Padding { Same, Causal };

// x:[batch, 1, len], kernels:[channels, 1, k], bias:[channels] -> [batch, channels, len].
// Same pads symmetrically ((k-1)/2 on the left); Causal pads k-1 on the left so
// output t only reads inputs <= t. Both preserve the sequence length.
Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Padding padding);

// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Over the last axis.
Tensor softmax(const Tensor& x);

// Mean over rows of -log softmax(logits)[target]. logits:[n, C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
// Sum over rows of weight[i] * -log softmax(logits)[i][target[i]]; rows with
// weight 0 contribute nothing (targets there are not range-checked).
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> targets,
                              std::span<const double> weights);

struct AttentionMask {
  bool causal = true;
  // Optional key-validity flags (1 valid, 0 masked), `groups` rows of n each.
  // Attention batch g uses row g / (batches / groups).
  std::vector<double> key_valid;
  std::size_t groups = 0;
};

// softmax(Q K^T / sqrt(d_k)) V over Q, K, V:[..., n, d_k]. Masked logits are
// excluded from the softmax; a query with no permitted key outputs zeros.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask);
// The attention probabilities [..., n, n] (no graph).
Tensor attention_weights(const Tensor& q, const Tensor& k, const AttentionMask& mask);

Tensor reshape(const Tensor& x, Shape shape);
// [..., a, b] -> [..., b, a]
Tensor transpose_last2(const Tensor& x);
// [B, n, h*dh] -> [B, h, n, dh] and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);
// Concatenate along the last axis; leading shapes must agree.
Tensor concat_last(const std::vector<Tensor>& parts);
// K tensors [B, w, d] -> [B, w*K, d] with token k of step t at position t*K + k.
Tensor interleave(const std::vector<Tensor>& tokens);
// x:[B, N, d] -> [B, P, d] picking positions along axis 1.
Tensor select_positions(const Tensor& x, std::span<const std::size_t> positions);
// Rows of table:[V, d] gathered by index; result shape = index_shape + [d].
Tensor embedding(const Tensor& table, std::span<const std::size_t> indices, Shape index_shape);
// x:[..., d] with each length-d row multiplied by a constant row_scale entry.
Tensor scale_rows(const Tensor& x, std::span<const double> row_scale);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_squares(const Tensor& x);

}  // namespace l4sllm::tensor
