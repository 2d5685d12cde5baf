#include <doctest.h>

#include <cmath>
#include <set>
#include <string>

#include "tsgc/errors.hpp"
#include "tsgc/layers.hpp"

using namespace tsgc;

namespace {

constexpr Index kM = 9;
constexpr Index kK = 4;
constexpr Index kIn = 3;
constexpr Index kOut = 5;

RowMatrix<double> random_features(Rng& rng) {
  RowMatrix<double> x(kM, kIn);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = uniform(rng, -2, 2);
  return x;
}

KnnGraph random_graph(Rng& rng) {
  KnnGraph g;
  g.indices.resize(kM, kK);
  for (Index i = 0; i < kM; ++i) {
    for (Index j = 0; j < kK; ++j) g.indices(i, j) = static_cast<Index>(uniform_index(rng, kM));
  }
  return g;
}

RowMatrix<double> as_matrix(const Tensor<double>& t) {
  return Eigen::Map<const RowMatrix<double>>(t.value().data(), t.dim(0), t.dim(1));
}

double leaky(double v) { return v > 0 ? v : kLeakySlope * v; }

// Unfactored calibration in eval mode with fresh BN statistics (mean 0, var 1).
double calibrated_oracle(GraphLayer<double>& layer, const RowMatrix<double>& x, const KnnGraph& g, Index i, Index j,
                         Index c) {
  const RowMatrix<double> w = as_matrix(layer.calibrate_weight());
  double v = layer.calibrate_bias().value()[c];
  const Index n = g.indices(i, j);
  for (Index q = 0; q < kIn; ++q) v += x(i, q) * w(q, c) + x(n, q) * w(kIn + q, c);
  return leaky(v / std::sqrt(1.0 + kBatchNormEps));
}

double edge(const Tensor<double>& t, Index i, Index j, Index c) {
  return t.value()[(i * t.dim(1) + j) * t.dim(2) + c];
}

}  // namespace

TEST_CASE("linear init is fan-in scaled with zero bias") {
  Rng rng = make_rng(1);
  Linear<double> lin("fc", 16, 8, rng);
  const double bound = 1.0 / std::sqrt(16.0);
  CHECK(lin.weight().value().abs().maxCoeff() <= bound);
  CHECK(lin.weight().value().abs().maxCoeff() > 0.5 * bound);
  CHECK((lin.bias().value() == 0.0).all());
  StateRefs<double> refs;
  lin.collect(refs);
  REQUIRE(refs.parameters.size() == 2);
  CHECK(refs.parameters[0].name == "fc.weight");
  CHECK(refs.parameters[1].name == "fc.bias");
}

TEST_CASE("shared mlp without normalization is a plain affine map") {
  Rng rng = make_rng(2);
  SharedMlp<double> mlp("head", kIn, 2, rng, false);
  RowMatrix<double> x = random_features(rng);
  auto y = mlp(Tensor<double>::from_matrix(x), Mode::kTrain);
  RowMatrix<double> expected = x * as_matrix(mlp.linear().weight());
  CHECK((as_matrix(y) - expected).cwiseAbs().maxCoeff() < 1e-12);
  StateRefs<double> refs;
  mlp.collect(refs);
  CHECK(refs.buffers.empty());
}

TEST_CASE("shared mlp with normalization exposes bn state") {
  Rng rng = make_rng(3);
  SharedMlp<double> mlp("fuse", kIn, 4, rng);
  StateRefs<double> refs;
  mlp.collect(refs);
  std::set<std::string> names;
  for (const auto& p : refs.parameters) names.insert(p.name);
  CHECK(names == std::set<std::string>{"fuse.linear.weight", "fuse.linear.bias", "fuse.bn.gamma", "fuse.bn.beta"});
  REQUIRE(refs.buffers.size() == 2);
  CHECK(refs.buffers[0].name == "fuse.bn.running_mean");
  CHECK(refs.norms.size() == 1);
}

TEST_CASE("edge calibration matches the unfactored form") {
  Rng rng = make_rng(4);
  GraphMaxPoolLayer<double> layer("g", kIn, kOut, rng);
  RowMatrix<double> x = random_features(rng);
  KnnGraph g = random_graph(rng);
  auto cal = layer.calibrate(Tensor<double>::from_matrix(x), g, Mode::kEval);
  REQUIRE(cal.shape() == Shape{kM, kK, kOut});
  for (Index i = 0; i < kM; ++i) {
    for (Index j = 0; j < kK; ++j) {
      for (Index c = 0; c < kOut; ++c) {
        CHECK(edge(cal, i, j, c) == doctest::Approx(calibrated_oracle(layer, x, g, i, j, c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("max pooling takes the channel-wise maximum over edges") {
  Rng rng = make_rng(5);
  GraphMaxPoolLayer<double> layer("g", kIn, kOut, rng);
  RowMatrix<double> x = random_features(rng);
  KnnGraph g = random_graph(rng);
  auto y = layer.forward(Tensor<double>::from_matrix(x), g, Mode::kEval);
  REQUIRE(y.shape() == Shape{kM, kOut});
  for (Index i = 0; i < kM; ++i) {
    for (Index c = 0; c < kOut; ++c) {
      double best = -INFINITY;
      for (Index j = 0; j < kK; ++j) best = std::max(best, calibrated_oracle(layer, x, g, i, j, c));
      CHECK(y.value()[i * kOut + c] == doctest::Approx(best).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention scores, weights and output") {
  Rng rng = make_rng(6);
  GraphAttentionLayer<double> layer("a", kIn, kOut, rng);
  RowMatrix<double> x = random_features(rng);
  KnnGraph g = random_graph(rng);
  Tensor<double> alpha;
  auto y = layer.forward(Tensor<double>::from_matrix(x), g, Mode::kEval, &alpha);
  auto s = layer.scores(Tensor<double>::from_matrix(x), g);
  REQUIRE(alpha.shape() == Shape{kM, kK, kOut});
  const RowMatrix<double> a = as_matrix(layer.attention_weight());
  for (Index i = 0; i < kM; ++i) {
    for (Index c = 0; c < kOut; ++c) {
      double z = 0.0;
      double out = 0.0;
      std::vector<double> e(kK);
      for (Index j = 0; j < kK; ++j) {
        const Index n = g.indices(i, j);
        double score = layer.attention_bias().value()[c];
        for (Index q = 0; q < kIn; ++q) score += (x(i, q) - x(n, q)) * a(q, c) + x(n, q) * a(kIn + q, c);
        CHECK(edge(s, i, j, c) == doctest::Approx(score).epsilon(1e-12));
        e[j] = std::exp(score);
        z += e[j];
      }
      double total = 0.0;
      for (Index j = 0; j < kK; ++j) {
        CHECK(edge(alpha, i, j, c) == doctest::Approx(e[j] / z).epsilon(1e-12));
        total += edge(alpha, i, j, c);
        out += e[j] / z * calibrated_oracle(layer, x, g, i, j, c);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
      CHECK(y.value()[i * kOut + c] == doctest::Approx(out).epsilon(1e-12));
    }
  }
}

TEST_CASE("attention with hidden widths") {
  Rng rng = make_rng(7);
  GraphAttentionLayer<double> layer("a", kIn, kOut, rng, kLeakySlope, {7});
  CHECK(layer.attention_weight().shape() == Shape{2 * kIn, 7});
  StateRefs<double> refs;
  layer.collect(refs);
  std::set<std::string> names;
  for (const auto& p : refs.parameters) names.insert(p.name);
  CHECK(names.count("a.attn.hidden0.weight") == 1);
  RowMatrix<double> x = random_features(rng);
  auto s = layer.scores(Tensor<double>::from_matrix(x), random_graph(rng));
  CHECK(s.shape() == Shape{kM, kK, kOut});
}

TEST_CASE("property: output does not depend on neighbor order") {
  Rng rng = make_rng(8);
  for (Aggregation kind : {Aggregation::kAttention, Aggregation::kMaxPool}) {
    auto layer = make_graph_layer<double>(kind, "l", kIn, kOut, rng);
    CHECK(layer->aggregation() == kind);
    for (int trial = 0; trial < 10; ++trial) {
      RowMatrix<double> x = random_features(rng);
      KnnGraph g = random_graph(rng);
      KnnGraph p = g;
      for (Index i = 0; i < kM; ++i) {
        std::vector<Index> row(p.indices.row(i).data(), p.indices.row(i).data() + kK);
        shuffle(row, rng);
        for (Index j = 0; j < kK; ++j) p.indices(i, j) = row[static_cast<std::size_t>(j)];
      }
      for (Mode mode : {Mode::kEval, Mode::kTrain}) {
        auto a = layer->forward(Tensor<double>::from_matrix(x), g, mode);
        auto b = layer->forward(Tensor<double>::from_matrix(x), p, mode);
        CHECK((a.value() - b.value()).abs().maxCoeff() < 1e-12);
      }
    }
  }
}

TEST_CASE("graph layer input checks") {
  Rng rng = make_rng(9);
  GraphMaxPoolLayer<double> layer("g", kIn, kOut, rng);
  KnnGraph g = random_graph(rng);
  CHECK_THROWS_AS(layer.forward(Tensor<double>::zeros({kM, kIn + 1}), g, Mode::kEval), DimensionError);
  CHECK_THROWS_AS(layer.forward(Tensor<double>::zeros({kM - 1, kIn}), g, Mode::kEval), DimensionError);
}
