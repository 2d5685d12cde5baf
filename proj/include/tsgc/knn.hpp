#pragma once

#include <span>

#include "tsgc/ops.hpp"
#include "tsgc/tensor.hpp"

namespace tsgc {

/// Directed K-nearest-neighbor table over cells in some feature space.
/// Row i lists neighbor cell ids by non-decreasing distance.
struct KnnGraph {
  IndexMatrix indices;  // M x K

  Index k() const { return indices.cols(); }
  Index num_cells() const { return indices.rows(); }
};

/// Exact KNN by sorting squared Euclidean distances (accumulated in double).
/// Ties go to the lower cell index. The cell itself is excluded unless
/// `include_self`, in which case it competes like any other cell.
/// Throws ConfigError when K >= M (K > M with `include_self`).
KnnGraph build_knn_graph(const Eigen::Ref<const RowMatrix<double>>& features, Index k, bool include_self = false);
KnnGraph build_knn_graph(const Eigen::Ref<const RowMatrix<float>>& features, Index k, bool include_self = false);

/// One graph per consecutive row segment (one segment per mesh of a batch);
/// indices are global row ids, so neighbors never cross segments.
template <typename Scalar>
KnnGraph build_batched_knn_graph(const Eigen::Ref<const RowMatrix<Scalar>>& features, std::span<const Index> segments,
                                 Index k, bool include_self = false);

/// Row i repeated K times; gathering with it broadcasts each center over its edges.
IndexMatrix self_index_table(Index rows, Index k);

template <typename Scalar>
struct EdgeTensors {
  Tensor<Scalar> concat;  // M x K x 2d : f_i (+) f_ij
  Tensor<Scalar> diff;    // M x K x d  : f_i - f_ij
};

template <typename Scalar>
EdgeTensors<Scalar> edge_tensors(const Tensor<Scalar>& features, const KnnGraph& graph);

extern template KnnGraph build_batched_knn_graph<float>(const Eigen::Ref<const RowMatrix<float>>&,
                                                        std::span<const Index>, Index, bool);
extern template KnnGraph build_batched_knn_graph<double>(const Eigen::Ref<const RowMatrix<double>>&,
                                                         std::span<const Index>, Index, bool);
extern template EdgeTensors<float> edge_tensors(const Tensor<float>&, const KnnGraph&);
extern template EdgeTensors<double> edge_tensors(const Tensor<double>&, const KnnGraph&);

}  // namespace tsgc
