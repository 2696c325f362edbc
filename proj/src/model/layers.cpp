#include "l4sllm/model/layers.hpp"

#include <cmath>

namespace l4sllm::model {

Parameter make_param(std::string name, tensor::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(tensor::shape_numel(shape));
  for (double& v : values) v = normal(rng);
  return {std::move(name), Tensor(std::move(shape), std::move(values), true), false};
}

Parameter make_const_param(std::string name, tensor::Shape shape, double value) {
  return {std::move(name), Tensor::full(std::move(shape), value, true), false};
}

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, double init_scale)
    : weight(make_param(name + ".weight", {in, out}, init_scale / std::sqrt(static_cast<double>(in)), rng)),
      bias(make_const_param(name + ".bias", {out}, 0.0)) {}

Tensor Linear::forward(const Tensor& x) const { return tensor::linear(x, weight.value, bias.value); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, std::size_t dim)
    : gamma(make_const_param(name + ".gamma", {dim}, 1.0)), beta(make_const_param(name + ".beta", {dim}, 0.0)) {}

Tensor LayerNorm::forward(const Tensor& x) const { return tensor::layer_norm(x, gamma.value, beta.value); }

void LayerNorm::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

}  // namespace l4sllm::model
