#include "l4sllm/tensor/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace l4sllm::tensor {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw TensorError("tensor data length " + std::to_string(values.size()) +
                      " does not match shape " + shape_to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

Tensor Tensor::make_result(std::string op, Shape shape, std::vector<double> values,
                           std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward_fn) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericFault(op, "value");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = std::move(op);
  bool any = false;
  for (const Tensor& p : parents) any = any || p.requires_grad();
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const Tensor& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

namespace {

std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  // Iterative post-order DFS; deep graphs (long sequences) must not recurse.
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined()) throw TensorError("backward() on undefined tensor");
  if (loss.numel() != 1) throw TensorError("backward() needs a scalar loss, got " + shape_to_string(loss.shape()));
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;
  std::vector<detail::Node*> order = topo_order(root);
  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    for (double g : node->grad) {
      if (!std::isfinite(g)) throw NumericFault(node->op, "gradient");
    }
    node->backward(*node);
  }
}

std::size_t graph_size(const Tensor& loss) {
  if (!loss.defined() || !loss.requires_grad()) return 0;
  return topo_order(loss.node()).size();
}

}  // namespace l4sllm::tensor
