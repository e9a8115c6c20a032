#include "vitc/tensor.hpp"

#include <unordered_set>

#include "vitc/error.hpp"

namespace vitc {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::vector<float>& detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0f);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "shape " + shape_to_string(shape) + " does not hold " +
                    std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

float Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->values[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->values, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(node_->shape, node_->values, requires_grad); }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() needs a single-element loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first). The
  // order holds owning pointers because edges are released as we go.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<std::shared_ptr<detail::Node>, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      std::shared_ptr<detail::Node> child = node->inputs[next++];
      if (child->requires_grad && visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = it->get();
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    node->backward_fn = nullptr;
    node->inputs.clear();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace vitc
