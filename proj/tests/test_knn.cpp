#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "tsgc/errors.hpp"
#include "tsgc/knn.hpp"
#include "tsgc/random.hpp"

using namespace tsgc;

namespace {

// Brute force: stable sort of the full distance row, self removed unless asked for.
IndexMatrix oracle(const RowMatrix<double>& x, Index k, bool include_self) {
  const Index m = x.rows();
  IndexMatrix out(m, k);
  for (Index i = 0; i < m; ++i) {
    std::vector<Index> order;
    for (Index j = 0; j < m; ++j) {
      if (j != i || include_self) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      return (x.row(i) - x.row(a)).squaredNorm() < (x.row(i) - x.row(b)).squaredNorm();
    });
    for (Index c = 0; c < k; ++c) out(i, c) = order[static_cast<std::size_t>(c)];
  }
  return out;
}

RowMatrix<double> random_points(Index m, Index d, Rng& rng, bool quantize) {
  RowMatrix<double> x(m, d);
  for (Index i = 0; i < x.size(); ++i) {
    const double v = uniform(rng, -1, 1);
    x.data()[i] = quantize ? std::round(v * 2) : v;
  }
  return x;
}

}  // namespace

TEST_CASE("points on a line") {
  RowMatrix<double> x(5, 1);
  x << 0, 1, 3, 4, 10;
  auto g = build_knn_graph(x, 2);
  IndexMatrix expected(5, 2);
  expected << 1, 2, 0, 2, 3, 1, 2, 1, 3, 2;
  CHECK(g.indices == expected);
  CHECK(g.k() == 2);
  CHECK(g.num_cells() == 5);
}

TEST_CASE("ties go to the lower index") {
  RowMatrix<double> x(4, 1);
  x << 0, 1, -1, 1;
  auto g = build_knn_graph(x, 3);
  CHECK(g.indices(0, 0) == 1);
  CHECK(g.indices(0, 1) == 2);
  CHECK(g.indices(0, 2) == 3);
  // Cells 1 and 3 coincide.
  CHECK(g.indices(1, 0) == 3);
  CHECK(g.indices(3, 0) == 1);
}

TEST_CASE("include_self lets the cell compete") {
  RowMatrix<double> x(3, 1);
  x << 0, 0, 5;
  auto g = build_knn_graph(x, 2, true);
  // Cells 0 and 1 coincide, so cell 1 lists 0 before itself.
  CHECK(g.indices(1, 0) == 0);
  CHECK(g.indices(1, 1) == 1);
  CHECK(build_knn_graph(x, 3, true).k() == 3);
}

TEST_CASE("K must be smaller than the cell count") {
  RowMatrix<double> x = RowMatrix<double>::Zero(4, 2);
  CHECK_THROWS_AS(build_knn_graph(x, 4), ConfigError);
  CHECK_THROWS_AS(build_knn_graph(x, 5, true), ConfigError);
  CHECK_THROWS_AS(build_knn_graph(x, 0), ConfigError);
  CHECK_NOTHROW(build_knn_graph(x, 3));
}

TEST_CASE("property: matches brute force, with and without ties") {
  Rng rng = make_rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 10 + static_cast<Index>(uniform_index(rng, 120));
    const Index d = 1 + static_cast<Index>(uniform_index(rng, 12));
    const Index k = 1 + static_cast<Index>(uniform_index(rng, 16));
    const bool self = trial % 3 == 0;
    RowMatrix<double> x = random_points(m, d, rng, trial % 2 == 0);
    CHECK(build_knn_graph(x, k, self).indices == oracle(x, k, self));
    RowMatrix<float> xf = x.cast<float>();
    CHECK(build_knn_graph(xf, k, self).indices == oracle(xf.cast<double>(), k, self));
  }
}

TEST_CASE("batched graphs stay within their segment") {
  Rng rng = make_rng(22);
  RowMatrix<double> x = random_points(30, 3, rng, true);
  std::vector<Index> segments{12, 18};
  auto g = build_batched_knn_graph<double>(x, segments, 4);
  REQUIRE(g.num_cells() == 30);
  auto first = oracle(x.topRows(12), 4, false);
  auto second = oracle(x.bottomRows(18), 4, false);
  CHECK(g.indices.topRows(12) == first);
  CHECK(g.indices.bottomRows(18) == (second.array() + 12).matrix());

  std::vector<Index> wrong{12, 17};
  CHECK_THROWS_AS(build_batched_knn_graph<double>(x, wrong, 4), DimensionError);
}

TEST_CASE("edge tensors") {
  RowMatrix<double> x(3, 2);
  x << 1, 2, 3, 5, 0, -1;
  KnnGraph g;
  g.indices.resize(3, 2);
  g.indices << 1, 2, 0, 2, 1, 0;
  auto e = edge_tensors(Tensor<double>::from_matrix(x), g);
  REQUIRE(e.concat.shape() == Shape{3, 2, 4});
  REQUIRE(e.diff.shape() == Shape{3, 2, 2});
  // cell 0, edge 1 -> neighbor 2
  const double* c = e.concat.value().data() + (0 * 2 + 1) * 4;
  CHECK(c[0] == 1);
  CHECK(c[1] == 2);
  CHECK(c[2] == 0);
  CHECK(c[3] == -1);
  const double* d = e.diff.value().data() + (0 * 2 + 1) * 2;
  CHECK(d[0] == 1);
  CHECK(d[1] == 3);
}

TEST_CASE("self index table") {
  IndexMatrix t = self_index_table(3, 2);
  IndexMatrix expected(3, 2);
  expected << 0, 0, 1, 1, 2, 2;
  CHECK(t == expected);
}
