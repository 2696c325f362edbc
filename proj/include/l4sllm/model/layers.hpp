#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "l4sllm/tensor/ops.hpp"
#include "l4sllm/tensor/optim.hpp"

namespace l4sllm::model {

using tensor::Parameter;
using tensor::Tensor;
using Rng = std::mt19937_64;

Parameter make_param(std::string name, tensor::Shape shape, double stddev, Rng& rng);
Parameter make_const_param(std::string name, tensor::Shape shape, double value);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double init_scale = 1.0);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);
  std::size_t in_features() const { return weight.value.dim(0); }
  std::size_t out_features() const { return weight.value.dim(1); }

  Parameter weight;  // [in, out]
  Parameter bias;    // [out]
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t dim);
  Tensor forward(const Tensor& x) const;
  void collect(std::vector<Parameter*>& out);

  Parameter gamma;
  Parameter beta;
};

}  // namespace l4sllm::model
