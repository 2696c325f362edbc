#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "l4sllm/tensor/tensor.hpp"

namespace l4sllm::tensor {

struct GradCheckOptions {
  double eps = 1e-4;
  // Coordinates checked per tensor; 0 checks every coordinate.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 7;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst;  // "<tensor index>:<coordinate>"
};

// Compares the analytic gradient of the scalar f() with respect to each
// tensor in `inputs` against central differences (f(x+eps) - f(x-eps)) / 2eps.
// f must build a fresh graph from the current values of `inputs` on each call.
GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace l4sllm::tensor
