#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vitc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until the first gradient arrives
  bool requires_grad = false;

  // Graph edges; released once backward has consumed them.
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<float>& ensure_grad();
};

}  // namespace detail

// Dense row-major float32 array with an optional gradient slot.
//
// Tensor is a cheap handle: copies share storage. Operations in ops.hpp
// produce new tensors and, when any input requires a gradient, record the
// edge needed by backward().
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->values.size(); }

  std::span<const float> values() const { return node_->values; }
  // In-place write access. Only optimizers and test fixtures should use it;
  // tensors inside a live graph must not be mutated.
  std::span<float> mutable_values() { return node_->values; }
  float item() const;
  float at(std::size_t flat_index) const { return node_->values.at(flat_index); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const float> grad() const { return node_->grad; }
  std::span<float> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  // A new leaf holding a copy of the values; no graph, no gradient.
  Tensor detach() const;
  Tensor clone(bool requires_grad) const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Reverse-mode sweep from a single-element tensor. Leaf gradients
// accumulate across calls; clear them explicitly between optimizer steps.
void backward(const Tensor& loss);

// Disables graph recording for the lifetime of the guard (thread-local).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

}  // namespace vitc
