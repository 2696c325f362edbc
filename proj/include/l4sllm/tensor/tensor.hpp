#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Ops record a backward
// closure on their output whenever any input requires a gradient; backward()
// walks the recorded graph once in reverse topological order and accumulates
// gradients additively into every contributing node.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace l4sllm::tensor {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN or Inf showed up in a value or gradient; `op` names the producing op.
class NumericFault : public std::runtime_error {
 public:
  NumericFault(const std::string& op, const std::string& what)
      : std::runtime_error("non-finite " + what + " at op '" + op + "'"), op_(op) {}
  const std::string& op() const { return op_; }

 private:
  std::string op_;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  // Direct mutation is meant for leaves (initialization, optimizer updates).
  std::span<double> mutable_data() { return node_->value; }
  double item() const;
  double at(std::size_t flat_index) const { return node_->value.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  const std::string& op() const { return node_->op; }

  // Copy of the value with no graph history.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared_node() const { return node_; }

  // Builds an op output: records parents and the backward closure only when
  // some parent requires a gradient. Throws NumericFault on non-finite values.
  static Tensor make_result(std::string op, Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// Seeds d(loss)/d(loss) = 1 and propagates to every node that requires a
// gradient. Each node's backward runs exactly once.
void backward(const Tensor& loss);

// Number of nodes a backward pass from `loss` would visit (graph inspection).
std::size_t graph_size(const Tensor& loss);

}  // namespace l4sllm::tensor
