#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "l4sllm/tensor/tensor.hpp"

namespace l4sllm::tensor {

struct Parameter {
  std::string name;
  Tensor value;
  bool frozen = false;
};

struct StepReport {
  double grad_norm = 0.0;   // global L2 norm of the averaged gradient, before clipping
  double clip_scale = 1.0;  // factor applied to the averaged gradient
};

// Global L2 norm over the gradients of every non-frozen parameter. Parameters
// without a gradient count as zero.
double global_grad_norm(const std::vector<Parameter*>& params);

// Plain SGD with global-norm clipping. Gradients summed over `accumulation`
// micro-batches are averaged, clipped to `clip_norm` (<= 0 disables), then
// applied as p <- p - lr * g to non-frozen parameters only. Gradients are
// cleared afterwards. A non-finite gradient aborts the step before any
// parameter is touched.
class Sgd {
 public:
  Sgd(double lr, double clip_norm);
  StepReport step(const std::vector<Parameter*>& params, std::size_t accumulation = 1);
  double lr() const { return lr_; }

 private:
  double lr_;
  double clip_norm_;
};

// Adam with the same clipping/averaging contract as Sgd.
class Adam {
 public:
  Adam(double lr, double clip_norm, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  StepReport step(const std::vector<Parameter*>& params, std::size_t accumulation = 1);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  double lr_;
  double clip_norm_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
  std::vector<std::pair<detail::Node*, Moments>> state_;
  Moments& moments_for(Parameter& p);
};

void zero_grads(const std::vector<Parameter*>& params);

}  // namespace l4sllm::tensor
