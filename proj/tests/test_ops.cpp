#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "tsgc/errors.hpp"
#include "tsgc/ops.hpp"

using namespace tsgc;

namespace {

Tensor<double> mat(Index r, Index c, std::initializer_list<double> v, bool grad = false) {
  Eigen::ArrayXd a(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) a[i++] = x;
  return Tensor<double>({r, c}, a, grad);
}

}  // namespace

TEST_CASE("softmax of [1, 2, 3]") {
  auto s = softmax_axis(mat(1, 3, {1, 2, 3}), 1);
  CHECK(s.value()[0] == doctest::Approx(0.09003057).epsilon(1e-6));
  CHECK(s.value()[1] == doctest::Approx(0.24472847).epsilon(1e-6));
  CHECK(s.value()[2] == doctest::Approx(0.66524096).epsilon(1e-6));
}

TEST_CASE("softmax is stable for large logits") {
  auto s = softmax_axis(mat(1, 2, {1000, 1000}), 1);
  CHECK(s.value()[0] == doctest::Approx(0.5));
  CHECK(std::isfinite(s.value()[1]));
}

TEST_CASE("affine forward and backward") {
  auto x = mat(1, 2, {1, 2}, true);
  auto w = mat(2, 1, {1, 1}, true);
  auto b = Tensor<double>::full({1}, 0.5, true);
  auto y = affine(x, w, b);
  CHECK(y.value()[0] == doctest::Approx(3.5));
  sum_all(y).backward();
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(w.grad()[0] == 1.0);
  CHECK(w.grad()[1] == 2.0);
  CHECK(b.grad()[0] == 1.0);
}

TEST_CASE("affine rejects mismatched inner dimension") {
  CHECK_THROWS_AS(affine(mat(1, 2, {1, 2}), mat(3, 1, {1, 1, 1}), Tensor<double>()), DimensionError);
}

TEST_CASE("batch norm in train mode standardizes each channel") {
  BatchNormStats<double> stats(1);
  auto gamma = Tensor<double>::full({1}, 1.0);
  auto beta = Tensor<double>::zeros({1});
  auto y = batch_norm(mat(2, 1, {1, 3}), gamma, beta, stats, Mode::kTrain);
  CHECK(y.value()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(y.value()[1] == doctest::Approx(1.0).epsilon(1e-4));
  // running estimates: 0.9 * 0 + 0.1 * 2 and 0.9 * 1 + 0.1 * 2 (unbiased variance of {1, 3})
  CHECK(stats.running_mean[0] == doctest::Approx(0.2));
  CHECK(stats.running_var[0] == doctest::Approx(1.1));
}

TEST_CASE("batch norm in eval mode uses and keeps the running estimates") {
  BatchNormStats<double> stats(1);
  stats.running_mean[0] = 2.0;
  stats.running_var[0] = 4.0;
  auto y = batch_norm(mat(1, 1, {6}), Tensor<double>::full({1}, 3.0), Tensor<double>::full({1}, 1.0), stats,
                      Mode::kEval);
  CHECK(y.value()[0] == doctest::Approx(3.0 * 4.0 / std::sqrt(4.0 + kBatchNormEps) + 1.0));
  CHECK(stats.running_mean[0] == 2.0);
  CHECK(stats.running_var[0] == 4.0);
}

TEST_CASE("batch norm in train mode needs two rows") {
  BatchNormStats<double> stats(1);
  CHECK_THROWS_AS(batch_norm(mat(1, 1, {1}), Tensor<double>::full({1}, 1.0), Tensor<double>::zeros({1}), stats,
                             Mode::kTrain),
                  StatisticsError);
}

TEST_CASE("gather_rows forward and scatter-add backward") {
  auto src = mat(3, 2, {1, 2, 3, 4, 5, 6}, true);
  IndexMatrix idx(2, 2);
  idx << 2, 0, 2, 2;
  auto g = gather_rows(src, idx);
  REQUIRE(g.shape() == Shape{2, 2, 2});
  CHECK(g.value()[0] == 5.0);
  CHECK(g.value()[1] == 6.0);
  CHECK(g.value()[2] == 1.0);
  CHECK(g.value()[3] == 2.0);
  sum_all(g).backward();
  CHECK(src.grad()[0] == 1.0);
  CHECK(src.grad()[2] == 0.0);
  CHECK(src.grad()[4] == 3.0);
}

TEST_CASE("gather_rows rejects out-of-range indices") {
  IndexMatrix idx(1, 1);
  idx << 3;
  CHECK_THROWS_AS(gather_rows(mat(3, 1, {1, 2, 3}), idx), IndexError);
}

TEST_CASE("max_axis picks column maxima and routes gradient to the lowest arg-max") {
  auto x = mat(2, 2, {1, 5, 7, 2}, true);
  auto m = max_axis(x, 0);
  CHECK(m.value()[0] == 7.0);
  CHECK(m.value()[1] == 5.0);
  sum_all(m).backward();
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 1.0);
  CHECK(x.grad()[3] == 0.0);

  auto t = mat(1, 3, {4, 4, 1}, true);
  sum_all(max_axis(t, 1)).backward();
  CHECK(t.grad()[0] == 1.0);
  CHECK(t.grad()[1] == 0.0);
}

TEST_CASE("leaky_relu") {
  auto x = mat(1, 3, {-1, 0, 2}, true);
  auto y = leaky_relu(x, 0.2);
  CHECK(y.value()[0] == doctest::Approx(-0.2));
  CHECK(y.value()[1] == 0.0);
  CHECK(y.value()[2] == 2.0);
  sum_all(y).backward();
  CHECK(x.grad()[0] == doctest::Approx(0.2));
  CHECK(x.grad()[2] == 1.0);
}

TEST_CASE("concat along channels") {
  std::vector<Tensor<double>> parts{mat(1, 2, {1, 2}, true), mat(1, 1, {3}, true)};
  auto c = concat_channels(parts);
  REQUIRE(c.shape() == Shape{1, 3});
  CHECK(c.value()[2] == 3.0);
  sum_all(c * c).backward();
  CHECK(parts[0].grad()[1] == 4.0);
  CHECK(parts[1].grad()[0] == 6.0);
}

TEST_CASE("sum and mean over an axis") {
  auto x = mat(2, 3, {1, 2, 3, 4, 5, 6});
  auto s = sum_axis(x, 1);
  CHECK(s.value()[0] == 6.0);
  CHECK(s.value()[1] == 15.0);
  auto m = mean_axis(x, 0);
  CHECK(m.value()[2] == 4.5);
}

TEST_CASE("mean over an empty axis is an error") {
  auto x = Tensor<double>::zeros({0, 2});
  CHECK_THROWS_AS(mean_axis(x, 0), EmptyReductionError);
}

TEST_CASE("cross entropy against a hand computed value") {
  auto logits = mat(2, 2, {0, 0, 2, 0}, true);
  std::vector<int> labels{1, 0};
  const double expected = std::log(2.0) + std::log(1.0 + std::exp(-2.0));
  auto sum = cross_entropy(logits, labels, Reduction::kSum);
  CHECK(sum.item() == doctest::Approx(expected));
  auto mean = cross_entropy(logits, labels, Reduction::kMean);
  CHECK(mean.item() == doctest::Approx(expected / 2));
  sum.backward();
  // d/dz = softmax - onehot
  CHECK(logits.grad()[0] == doctest::Approx(0.5));
  CHECK(logits.grad()[1] == doctest::Approx(-0.5));
}

TEST_CASE("cross entropy rejects labels outside the class range") {
  std::vector<int> labels{2};
  CHECK_THROWS_AS(cross_entropy(mat(1, 2, {0, 0}), labels), DataError);
}

TEST_CASE("property: softmax rows sum to one") {
  std::mt19937 gen(3);
  std::normal_distribution<double> nd(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::ArrayXd a(4 * 7);
    for (Index i = 0; i < a.size(); ++i) a[i] = nd(gen);
    auto s = softmax_axis(Tensor<double>({4, 7}, a), 1);
    for (Index r = 0; r < 4; ++r) {
      double total = 0.0;
      for (Index c = 0; c < 7; ++c) {
        const double p = s.value()[r * 7 + c];
        CHECK(p >= 0.0);
        total += p;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}
