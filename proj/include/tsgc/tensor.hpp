#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tsgc {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Row-major integer table; used for KNN neighbor lists and gather indices.
using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string shape_string(const Shape& shape);
Index shape_size(const Shape& shape);

enum class Mode { kTrain, kEval };

namespace detail {

template <typename Scalar>
struct Node {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  Array grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Array& grad_accumulator() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
    return grad;
  }
};

}  // namespace detail

/// Dense row-major n-d array with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Operations (see ops.hpp) build a tape of nodes; `backward()` on a scalar
/// result walks it in reverse topological order and accumulates `grad()` into
/// every tensor that requires gradients. The last axis is the channel axis;
/// `matrix()` views the data as rows() x cols() with cols() the channel extent.
template <typename Scalar>
class Tensor {
 public:
  using Node = detail::Node<Scalar>;
  using Array = typename Node::Array;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using BackwardFn = std::function<void(Node&)>;

  Tensor() = default;
  Tensor(Shape shape, Array values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);

  template <typename Derived>
  static Tensor from_matrix(const Eigen::DenseBase<Derived>& m, bool requires_grad = false) {
    RowMatrix<Scalar> rm = m.template cast<Scalar>();
    Array values = Eigen::Map<const Array>(rm.data(), rm.size());
    return Tensor({rm.rows(), rm.cols()}, std::move(values), requires_grad);
  }

  /// Result node of an operation. Parents and the backward closure are kept
  /// only when at least one parent requires gradients.
  static Tensor make_result(Shape shape, Array value, const std::vector<Tensor>& parents,
                            BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index ndim() const { return static_cast<Index>(node_->shape.size()); }
  Index dim(Index axis) const;
  Index size() const { return node_->value.size(); }
  Index rows() const;
  Index cols() const;

  const Array& value() const { return node_->value; }
  /// In-place access for leaves (optimizer updates, gradient-check perturbation).
  Array& mutable_value() { return node_->value; }
  ConstMatrixMap matrix() const { return ConstMatrixMap(node_->value.data(), rows(), cols()); }
  MatrixMap mutable_matrix() { return MatrixMap(node_->value.data(), rows(), cols()); }
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && size() > 0; }
  const Array& grad() const { return node_->grad; }
  ConstMatrixMap grad_matrix() const { return ConstMatrixMap(node_->grad.data(), rows(), cols()); }
  void zero_grad() { node_->grad.resize(0); }

  /// Seeds d(this)/d(this) = 1 and back-propagates. Requires a single-element tensor.
  void backward() const;

  /// Same values, no history, no gradient.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace tsgc
