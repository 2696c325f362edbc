#include "l4sllm/tensor/optim.hpp"

#include <cmath>

namespace l4sllm::tensor {

namespace {

double prepare(const std::vector<Parameter*>& params, std::size_t accumulation, double clip_norm,
               StepReport& report) {
  if (accumulation == 0) throw TensorError("optimizer: accumulation must be >= 1");
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double g : p->value.grad()) {
      if (!std::isfinite(g)) throw NumericFault(p->name, "gradient (optimizer step aborted)");
    }
  }
  const double avg = 1.0 / static_cast<double>(accumulation);
  report.grad_norm = global_grad_norm(params) * avg;
  report.clip_scale = 1.0;
  if (clip_norm > 0.0 && report.grad_norm > clip_norm) report.clip_scale = clip_norm / report.grad_norm;
  return avg * report.clip_scale;
}

}  // namespace

double global_grad_norm(const std::vector<Parameter*>& params) {
  double sq = 0.0;
  for (const Parameter* p : params) {
    if (p->frozen) continue;
    for (double g : p->value.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->value.zero_grad();
}

Sgd::Sgd(double lr, double clip_norm) : lr_(lr), clip_norm_(clip_norm) {
  if (!(lr >= 0.0)) throw TensorError("sgd: learning rate must be >= 0");
}

StepReport Sgd::step(const std::vector<Parameter*>& params, std::size_t accumulation) {
  StepReport report;
  const double factor = prepare(params, accumulation, clip_norm_, report);
  for (Parameter* p : params) {
    if (p->frozen || !p->value.has_grad() || lr_ == 0.0) continue;
    auto data = p->value.mutable_data();
    auto grad = p->value.grad();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr_ * factor * grad[i];
  }
  zero_grads(params);
  return report;
}

Adam::Adam(double lr, double clip_norm, double beta1, double beta2, double eps)
    : lr_(lr), clip_norm_(clip_norm), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr >= 0.0)) throw TensorError("adam: learning rate must be >= 0");
}

Adam::Moments& Adam::moments_for(Parameter& p) {
  for (auto& [node, m] : state_) {
    if (node == p.value.node()) return m;
  }
  state_.push_back({p.value.node(), Moments{std::vector<double>(p.value.numel(), 0.0),
                                             std::vector<double>(p.value.numel(), 0.0)}});
  return state_.back().second;
}

StepReport Adam::step(const std::vector<Parameter*>& params, std::size_t accumulation) {
  StepReport report;
  const double factor = prepare(params, accumulation, clip_norm_, report);
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    if (p->frozen || !p->value.has_grad() || lr_ == 0.0) continue;
    Moments& mo = moments_for(*p);
    auto data = p->value.mutable_data();
    auto grad = p->value.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i] * factor;
      mo.m[i] = beta1_ * mo.m[i] + (1.0 - beta1_) * g;
      mo.v[i] = beta2_ * mo.v[i] + (1.0 - beta2_) * g * g;
      data[i] -= lr_ * (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps_);
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace l4sllm::tensor
