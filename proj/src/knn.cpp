#include "tsgc/knn.hpp"

#include <algorithm>
#include <utility>
#include <vector>

#include "tsgc/errors.hpp"

namespace tsgc {

namespace {

template <typename Scalar>
void fill_rows(const Eigen::Ref<const RowMatrix<Scalar>>& features, Index begin, Index count, Index k,
               bool include_self, IndexMatrix& out) {
  const Index d = features.cols();
  std::vector<std::pair<double, Index>> candidates;
  candidates.reserve(static_cast<std::size_t>(count));
  for (Index i = begin; i < begin + count; ++i) {
    candidates.clear();
    const Scalar* fi = features.data() + i * d;
    for (Index j = begin; j < begin + count; ++j) {
      if (j == i && !include_self) continue;
      const Scalar* fj = features.data() + j * d;
      double dist = 0.0;
      for (Index c = 0; c < d; ++c) {
        const double delta = static_cast<double>(fi[c]) - static_cast<double>(fj[c]);
        dist += delta * delta;
      }
      candidates.emplace_back(dist, j);
    }
    // pair ordering compares distance, then index: the documented tie-break.
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    for (Index j = 0; j < k; ++j) out(i, j) = candidates[static_cast<std::size_t>(j)].second;
  }
}

void check_k(Index m, Index k, bool include_self) {
  if (k <= 0) throw ConfigError("KNN size K must be positive, got " + std::to_string(k));
  if (include_self ? k > m : k >= m) {
    throw ConfigError("KNN size K=" + std::to_string(k) + " needs more than " + std::to_string(m) + " cells");
  }
}

template <typename Scalar>
KnnGraph build_single(const Eigen::Ref<const RowMatrix<Scalar>>& features, Index k, bool include_self) {
  check_k(features.rows(), k, include_self);
  KnnGraph g;
  g.indices.resize(features.rows(), k);
  fill_rows<Scalar>(features, 0, features.rows(), k, include_self, g.indices);
  return g;
}

}  // namespace

KnnGraph build_knn_graph(const Eigen::Ref<const RowMatrix<double>>& features, Index k, bool include_self) {
  return build_single<double>(features, k, include_self);
}

KnnGraph build_knn_graph(const Eigen::Ref<const RowMatrix<float>>& features, Index k, bool include_self) {
  return build_single<float>(features, k, include_self);
}

template <typename Scalar>
KnnGraph build_batched_knn_graph(const Eigen::Ref<const RowMatrix<Scalar>>& features, std::span<const Index> segments,
                                 Index k, bool include_self) {
  Index total = 0;
  for (Index s : segments) {
    check_k(s, k, include_self);
    total += s;
  }
  if (total != features.rows()) {
    throw DimensionError("segments cover " + std::to_string(total) + " rows of " + std::to_string(features.rows()));
  }
  KnnGraph g;
  g.indices.resize(total, k);
  Index begin = 0;
  for (Index s : segments) {
    fill_rows<Scalar>(features, begin, s, k, include_self, g.indices);
    begin += s;
  }
  return g;
}

IndexMatrix self_index_table(Index rows, Index k) {
  IndexMatrix idx(rows, k);
  for (Index i = 0; i < rows; ++i) idx.row(i).setConstant(i);
  return idx;
}

template <typename Scalar>
EdgeTensors<Scalar> edge_tensors(const Tensor<Scalar>& features, const KnnGraph& graph) {
  if (features.ndim() != 2 || features.dim(0) != graph.num_cells()) {
    throw DimensionError("edge_tensors: features " + shape_string(features.shape()) + " vs graph of " +
                         std::to_string(graph.num_cells()) + " cells");
  }
  const Tensor<Scalar> center = gather_rows(features, self_index_table(graph.num_cells(), graph.k()));
  const Tensor<Scalar> neighbor = gather_rows(features, graph.indices);
  return {concat_channels<Scalar>({center, neighbor}), sub(center, neighbor)};
}

template KnnGraph build_batched_knn_graph<float>(const Eigen::Ref<const RowMatrix<float>>&, std::span<const Index>,
                                                 Index, bool);
template KnnGraph build_batched_knn_graph<double>(const Eigen::Ref<const RowMatrix<double>>&, std::span<const Index>,
                                                  Index, bool);
template EdgeTensors<float> edge_tensors(const Tensor<float>&, const KnnGraph&);
template EdgeTensors<double> edge_tensors(const Tensor<double>&, const KnnGraph&);

}  // namespace tsgc
