#include "tsgc/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "tsgc/errors.hpp"

namespace tsgc {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index extent : shape) n *= extent;
  return n;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values, bool requires_grad) : node_(std::make_shared<Node>()) {
  for (Index extent : shape) {
    if (extent < 0) throw DimensionError("negative extent in shape " + shape_string(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape, bool requires_grad) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Array::Zero(n), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Array::Constant(n, value), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::make_result(Shape shape, Array value, const std::vector<Tensor>& parents,
                                           BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value), false);
  bool tracked = false;
  for (const Tensor& p : parents) tracked = tracked || p.requires_grad();
  if (tracked) {
    out.node_->requires_grad = true;
    out.node_->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  const Index n = ndim();
  const Index a = axis < 0 ? axis + n : axis;
  if (a < 0 || a >= n) {
    throw UsageError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename Scalar>
Index Tensor<Scalar>::rows() const {
  if (node_->shape.empty()) return 1;
  Index r = 1;
  for (std::size_t i = 0; i + 1 < node_->shape.size(); ++i) r *= node_->shape[i];
  return r;
}

template <typename Scalar>
Index Tensor<Scalar>::cols() const {
  return node_->shape.empty() ? 1 : node_->shape.back();
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw UsageError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
void Tensor<Scalar>::backward() const {
  if (size() != 1) throw UsageError("backward() needs a scalar, got shape " + shape_string(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_accumulator()[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward) {
      node->grad_accumulator();
      node->backward(*node);
    }
  }
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace tsgc
