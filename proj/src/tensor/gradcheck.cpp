#include "l4sllm/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace l4sllm::tensor {

GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  for (Tensor& t : inputs) t.zero_grad();
  backward(f());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_tensor > 0 && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t c : coords) {
      auto data = t.mutable_data();
      const double saved = data[c];
      data[c] = saved + options.eps;
      const double plus = f().item();
      data[c] = saved - options.eps;
      const double minus = f().item();
      data[c] = saved;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic[ti][c];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel > result.max_rel_error || result.coords_checked == 0) {
        result.max_rel_error = std::max(result.max_rel_error, rel);
        if (rel >= result.max_rel_error) result.worst = std::to_string(ti) + ":" + std::to_string(c);
      }
      ++result.coords_checked;
    }
  }
  for (Tensor& t : inputs) t.zero_grad();
  return result;
}

}  // namespace l4sllm::tensor
