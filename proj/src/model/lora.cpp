#include "l4sllm/model/lora.hpp"

#include <algorithm>
#include <cmath>

namespace l4sllm::model {

namespace {
void freeze(Parameter& p) {
  p.frozen = true;
  p.value.set_requires_grad(false);
  p.value.zero_grad();
}
}  // namespace

LoraLinear::LoraLinear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double init_scale)
    : name_(name), base_(name, in, out, rng, init_scale) {}

bool LoraLinear::wrap(std::size_t rank, double scale, Rng& rng) {
  if (rank == 0) throw std::invalid_argument("lora: rank must be >= 1");
  const std::size_t in = base_.in_features();
  const std::size_t out = base_.out_features();
  freeze(base_.weight);
  freeze(base_.bias);
  lora_a_ = make_param(name_ + ".lora_a", {in, rank}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  lora_b_ = make_const_param(name_ + ".lora_b", {rank, out}, 0.0);
  scale_ = scale;
  return rank < std::min(in, out);
}

Tensor LoraLinear::forward(const Tensor& x) const {
  Tensor y = base_.forward(x);
  if (!wrapped()) return y;
  Tensor delta = tensor::matmul(tensor::matmul(x, lora_a_->value), lora_b_->value);
  if (scale_ != 1.0) delta = tensor::scale(delta, scale_);
  return tensor::add(y, delta);
}

Tensor LoraLinear::merge() const {
  const Tensor& w0 = base_.weight.value;
  if (!wrapped()) return w0.detach();
  const std::size_t in = w0.dim(0);
  const std::size_t out = w0.dim(1);
  const std::size_t r = lora_a_->value.dim(1);
  auto a = lora_a_->value.data();
  auto b = lora_b_->value.data();
  std::vector<double> merged(w0.data().begin(), w0.data().end());
  for (std::size_t i = 0; i < in; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r; ++k) acc += a[i * r + k] * b[k * out + j];
      merged[i * out + j] += scale_ * acc;
    }
  }
  return Tensor({in, out}, std::move(merged));
}

void LoraLinear::fold() {
  if (!wrapped()) return;
  Tensor merged = merge();
  std::copy(merged.data().begin(), merged.data().end(), base_.weight.value.mutable_data().begin());
  lora_a_.reset();
  lora_b_.reset();
}

std::size_t LoraLinear::trainable_count() const {
  if (!wrapped()) return base_.weight.value.numel() + base_.bias.value.numel();
  return lora_a_->value.numel() + lora_b_->value.numel();
}

std::size_t LoraLinear::frozen_count() const { return wrapped() ? base_.weight.value.numel() + base_.bias.value.numel() : 0; }

void LoraLinear::collect(std::vector<Parameter*>& out) {
  base_.collect(out);
  if (wrapped()) {
    out.push_back(&*lora_a_);
    out.push_back(&*lora_b_);
  }
}

}  // namespace l4sllm::model
