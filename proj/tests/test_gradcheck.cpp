#include <doctest.h>

#include <vector>

#include "tsgc/errors.hpp"
#include "tsgc/gradcheck.hpp"
#include "tsgc/ops.hpp"
#include "tsgc/random.hpp"

using namespace tsgc;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Eigen::ArrayXd a(shape_size(shape));
  for (Index i = 0; i < a.size(); ++i) a[i] = uniform(rng, -scale, scale);
  return Tensor<double>(std::move(shape), a, true);
}

// Weighted sum so every output element gets a distinct upstream gradient.
Tensor<double> project(const Tensor<double>& y) {
  Eigen::ArrayXd w(y.size());
  for (Index i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return sum_all(y * Tensor<double>(y.shape(), w));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("affine, leaky_relu and concat") {
  Rng rng = make_rng(11);
  std::vector<Tensor<double>> in{random_tensor({5, 3}, rng), random_tensor({3, 4}, rng), random_tensor({4}, rng),
                                 random_tensor({5, 2}, rng)};
  auto f = [&] {
    std::vector<Tensor<double>> parts{leaky_relu(affine(in[0], in[1], in[2]), 0.2), in[3]};
    return project(concat_channels(parts));
  };
  CHECK(gradient_check(f, in) < kTol);
}

TEST_CASE("softmax over each axis") {
  Rng rng = make_rng(12);
  std::vector<Tensor<double>> in{random_tensor({3, 4, 5}, rng, 2.0)};
  for (Index axis = 0; axis < 3; ++axis) {
    auto f = [&] { return project(softmax_axis(in[0], axis)); };
    CHECK(gradient_check(f, in) < kTol);
  }
}

TEST_CASE("batch norm in train mode") {
  Rng rng = make_rng(13);
  std::vector<Tensor<double>> in{random_tensor({6, 3, 4}, rng), random_tensor({4}, rng), random_tensor({4}, rng)};
  auto f = [&] {
    BatchNormStats<double> stats(4);
    return project(batch_norm(in[0], in[1], in[2], stats, Mode::kTrain));
  };
  CHECK(gradient_check(f, in) < kTol);
}

TEST_CASE("gather, max and mean reductions") {
  Rng rng = make_rng(14);
  std::vector<Tensor<double>> in{random_tensor({6, 3}, rng)};
  IndexMatrix idx(4, 3);
  idx << 0, 5, 5, 1, 2, 3, 4, 4, 0, 2, 1, 5;
  auto f = [&] {
    auto g = gather_rows(in[0], idx);
    return project(max_axis(g, 1)) + project(mean_axis(g, 0)) + project(sum_axis(g, 2));
  };
  CHECK(gradient_check(f, in) < kTol);
}

TEST_CASE("cross entropy with both reductions") {
  Rng rng = make_rng(15);
  std::vector<Tensor<double>> in{random_tensor({7, 4}, rng, 3.0)};
  std::vector<int> labels{0, 1, 2, 3, 3, 2, 1};
  for (Reduction r : {Reduction::kSum, Reduction::kMean}) {
    auto f = [&] { return cross_entropy(in[0], labels, r); };
    CHECK(gradient_check(f, in) < kTol);
  }
}

TEST_CASE("a wrong backward is detected") {
  Rng rng = make_rng(16);
  std::vector<Tensor<double>> in{random_tensor({4}, rng)};
  // Square whose backward forgets the factor 2.
  auto broken_square = [](const Tensor<double>& x) {
    return Tensor<double>::make_result(x.shape(), x.value().square(), {x}, [](detail::Node<double>& self) {
      self.parents[0]->grad_accumulator() += self.grad * self.parents[0]->value;
    });
  };
  auto f = [&] { return sum_all(broken_square(in[0])); };
  CHECK(gradient_check(f, in) > 0.1);
}

TEST_CASE("inputs are restored after the check") {
  Rng rng = make_rng(17);
  std::vector<Tensor<double>> in{random_tensor({3, 3}, rng)};
  const Eigen::ArrayXd before = in[0].value();
  gradient_check([&] { return project(softmax_axis(in[0], 1)); }, in);
  CHECK((in[0].value() == before).all());
}

TEST_CASE("non-scalar objective is rejected") {
  Rng rng = make_rng(18);
  std::vector<Tensor<double>> in{random_tensor({3}, rng)};
  CHECK_THROWS_AS(gradient_check([&] { return in[0] + in[0]; }, in), UsageError);
}
