#pragma once

#include <span>
#include <vector>

#include "tsgc/tensor.hpp"

namespace tsgc {

// Element-wise ops require identical shapes; there is no broadcasting.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }

/// Concatenation along `axis`; only the channel (last) axis is supported.
template <typename Scalar>
Tensor<Scalar> concat(std::span<const Tensor<Scalar>> parts, Index axis = -1);

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts) {
  return concat<Scalar>(std::span<const Tensor<Scalar>>(parts), -1);
}

/// x . W + b over the last axis: x is (..., in), W is (in, out), b is (out) or undefined.
template <typename Scalar>
Tensor<Scalar> affine(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias);

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& x, const Tensor<Scalar>& weight) {
  return affine(x, weight, Tensor<Scalar>());
}

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& x, Scalar negative_slope);

/// Rows [begin, begin + count) of a 2-d tensor.
template <typename Scalar>
Tensor<Scalar> slice_rows(const Tensor<Scalar>& x, Index begin, Index count);

template <typename Scalar>
Tensor<Scalar> sum_axis(const Tensor<Scalar>& x, Index axis);
template <typename Scalar>
Tensor<Scalar> mean_axis(const Tensor<Scalar>& x, Index axis);
/// Maximum along `axis`. Backward routes the gradient to the arg-max; ties go to the lowest index.
template <typename Scalar>
Tensor<Scalar> max_axis(const Tensor<Scalar>& x, Index axis);
/// Softmax along `axis`; output keeps the input shape.
template <typename Scalar>
Tensor<Scalar> softmax_axis(const Tensor<Scalar>& x, Index axis);

/// Sum of every element, as a one-element tensor.
template <typename Scalar>
Tensor<Scalar> sum_all(const Tensor<Scalar>& x);

/// out[i, j, :] = src[idx(i, j), :]. Backward scatter-adds into src rows.
template <typename Scalar>
Tensor<Scalar> gather_rows(const Tensor<Scalar>& src, const IndexMatrix& idx);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

template <typename Scalar>
struct BatchNormStats {
  Eigen::Array<Scalar, Eigen::Dynamic, 1> running_mean;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> running_var;
  Scalar momentum = Scalar(kBatchNormMomentum);  // used by the BatchNorm layer

  explicit BatchNormStats(Index channels = 0)
      : running_mean(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(channels)),
        running_var(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Ones(channels)) {}
};

/// Per-channel normalization over every row of x (..., d).
///
/// Train mode uses the biased batch variance for normalization and folds the
/// unbiased variance into the running estimate with `momentum`; eval mode uses
/// the running estimates and leaves them untouched.
template <typename Scalar>
Tensor<Scalar> batch_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma, const Tensor<Scalar>& beta,
                          BatchNormStats<Scalar>& stats, Mode mode, Scalar eps = Scalar(kBatchNormEps),
                          Scalar momentum = Scalar(kBatchNormMomentum));

enum class Reduction { kSum, kMean };

/// Cross-entropy of row-wise softmax(logits) against integer labels.
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels,
                             Reduction reduction = Reduction::kSum);

namespace debug {
/// Mutation hook for the self-verification harness: when set, softmax_axis
/// skips its normalization step.
void set_softmax_fault(bool enabled);
bool softmax_fault();
}  // namespace debug

#define TSGC_DECLARE_OPS(S)                                                                             \
  extern template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                    \
  extern template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                    \
  extern template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                    \
  extern template Tensor<S> concat(std::span<const Tensor<S>>, Index);                                  \
  extern template Tensor<S> affine(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);               \
  extern template Tensor<S> leaky_relu(const Tensor<S>&, S);                                            \
  extern template Tensor<S> slice_rows(const Tensor<S>&, Index, Index);                                 \
  extern template Tensor<S> sum_axis(const Tensor<S>&, Index);                                          \
  extern template Tensor<S> mean_axis(const Tensor<S>&, Index);                                         \
  extern template Tensor<S> max_axis(const Tensor<S>&, Index);                                          \
  extern template Tensor<S> softmax_axis(const Tensor<S>&, Index);                                      \
  extern template Tensor<S> sum_all(const Tensor<S>&);                                                  \
  extern template Tensor<S> gather_rows(const Tensor<S>&, const IndexMatrix&);                          \
  extern template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,            \
                                       BatchNormStats<S>&, Mode, S, S);                                 \
  extern template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const int>, Reduction);

TSGC_DECLARE_OPS(float)
TSGC_DECLARE_OPS(double)
#undef TSGC_DECLARE_OPS

}  // namespace tsgc
