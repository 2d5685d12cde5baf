#include <doctest.h>

#include "tsgc/errors.hpp"
#include "tsgc/ops.hpp"
#include "tsgc/tensor.hpp"

using namespace tsgc;

TEST_CASE("construction and shape queries") {
  Tensor<float> t = Tensor<float>::zeros({2, 3, 4});
  CHECK(t.ndim() == 3);
  CHECK(t.size() == 24);
  CHECK(t.dim(1) == 3);
  CHECK(t.dim(-1) == 4);
  CHECK(shape_string(t.shape()) == "[2,3,4]");
  CHECK_FALSE(t.requires_grad());

  Eigen::ArrayXd v(3);
  v << 1, 2, 3;
  CHECK_THROWS_AS(Tensor<double>({2, 2}, v), DimensionError);
}

TEST_CASE("from_matrix keeps row-major order") {
  Eigen::Matrix<double, 2, 3> m;
  m << 1, 2, 3, 4, 5, 6;
  auto t = Tensor<double>::from_matrix(m);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.value()[1] == 2.0);
  CHECK(t.value()[3] == 4.0);
  CHECK(t.matrix()(1, 2) == 6.0);
}

TEST_CASE("backward on a scalar accumulates through shared inputs") {
  auto x = Tensor<double>::full({3}, 2.0, true);
  auto y = sum_all(x * x + x);
  y.backward();
  REQUIRE(x.has_grad());
  for (Index i = 0; i < 3; ++i) CHECK(x.grad()[i] == doctest::Approx(5.0));
}

TEST_CASE("backward requires a single element") {
  auto x = Tensor<double>::full({2}, 1.0, true);
  CHECK_THROWS_AS((x + x).backward(), UsageError);
}

TEST_CASE("zero_grad clears and detach drops history") {
  auto x = Tensor<float>::full({2}, 1.0f, true);
  CHECK_FALSE(x.has_grad());
  sum_all(x).backward();
  CHECK(x.has_grad());
  x.zero_grad();
  CHECK_FALSE(x.has_grad());

  auto d = (x + x).detach();
  CHECK_FALSE(d.requires_grad());
  CHECK(d.value()[0] == 2.0f);
}

TEST_CASE("gradients accumulate across two backward passes") {
  auto x = Tensor<double>::full({1}, 3.0, true);
  sum_all(x * x).backward();
  sum_all(x * x).backward();
  CHECK(x.grad()[0] == doctest::Approx(12.0));
}
