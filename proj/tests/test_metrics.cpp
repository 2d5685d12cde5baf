#include <doctest.h>

#include <set>
#include <sstream>

#include "tsgc/errors.hpp"
#include "tsgc/metrics.hpp"
#include "tsgc/random.hpp"

using namespace tsgc;

TEST_CASE("hand example with an absent class") {
  ConfusionMatrix cm(4);
  std::vector<int> truth{0, 0, 1, 1, 2};
  std::vector<int> pred{0, 1, 1, 1, 0};
  cm.accumulate(pred, truth);
  CHECK(cm(0, 1) == 1);
  CHECK(cm(2, 0) == 1);
  CHECK(cm.total() == 5);
  auto m = compute_metrics(cm);
  CHECK(m.overall_accuracy == doctest::Approx(0.6));
  REQUIRE(m.class_iou.size() == 4);
  CHECK(*m.class_iou[0] == doctest::Approx(1.0 / 3));
  CHECK(*m.class_iou[1] == doctest::Approx(2.0 / 3));
  CHECK(*m.class_iou[2] == 0.0);
  CHECK_FALSE(m.class_iou[3].has_value());
  CHECK(m.has_undefined_class);
  CHECK(m.mean_iou == doctest::Approx(1.0 / 3));
}

TEST_CASE("perfect prediction") {
  ConfusionMatrix cm(3);
  std::vector<int> labels{0, 1, 2, 2, 1};
  cm.accumulate(labels, labels);
  auto m = compute_metrics(cm);
  CHECK(m.overall_accuracy == 1.0);
  CHECK(m.mean_iou == 1.0);
  CHECK_FALSE(m.has_undefined_class);
}

TEST_CASE("merge equals accumulating everything at once") {
  ConfusionMatrix a(3), b(3), all(3);
  std::vector<int> t1{0, 1, 2}, p1{0, 2, 2}, t2{1, 1}, p2{1, 0};
  a.accumulate(p1, t1);
  b.accumulate(p2, t2);
  a.merge(b);
  all.accumulate(p1, t1);
  all.accumulate(p2, t2);
  CHECK(a.counts() == all.counts());
  ConfusionMatrix other(4);
  CHECK_THROWS_AS(a.merge(other), DataError);
}

TEST_CASE("invalid input") {
  ConfusionMatrix cm(2);
  std::vector<int> two{0, 1}, one{0}, bad{0, 2};
  CHECK_THROWS_AS(cm.accumulate(two, one), DataError);
  CHECK_THROWS_AS(cm.accumulate(bad, two), DataError);
  CHECK_THROWS_AS(compute_metrics(cm), UsageError);
  CHECK_THROWS_AS(ConfusionMatrix(0), UsageError);
}

TEST_CASE("property: IoU agrees with set arithmetic") {
  Rng rng = make_rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int c = 2 + static_cast<int>(uniform_index(rng, 6));
    const std::size_t n = 1 + uniform_index(rng, 200);
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
      pred[i] = uniform01(rng) < 0.6 ? truth[i] : static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(c)));
    }
    ConfusionMatrix cm(c);
    cm.accumulate(pred, truth);
    auto m = compute_metrics(cm);
    double sum = 0.0;
    int defined = 0;
    std::size_t correct = 0;
    for (int k = 0; k < c; ++k) {
      std::set<std::size_t> t, p, both, either;
      for (std::size_t i = 0; i < n; ++i) {
        if (truth[i] == k) t.insert(i);
        if (pred[i] == k) p.insert(i);
      }
      for (std::size_t i : t) (p.count(i) ? both : either).insert(i);
      for (std::size_t i : p) either.insert(i);
      correct += both.size();
      if (t.empty() && p.empty()) {
        CHECK_FALSE(m.class_iou[static_cast<std::size_t>(k)].has_value());
        continue;
      }
      const double iou = static_cast<double>(both.size()) / static_cast<double>(either.size());
      CHECK(*m.class_iou[static_cast<std::size_t>(k)] == doctest::Approx(iou).epsilon(1e-15));
      sum += iou;
      ++defined;
    }
    CHECK(m.mean_iou == doctest::Approx(sum / defined).epsilon(1e-15));
    CHECK(m.overall_accuracy == doctest::Approx(static_cast<double>(correct) / static_cast<double>(n)));
  }
}

TEST_CASE("class names and report") {
  CHECK(default_class_names(3) == std::vector<std::string>{"BG", "T1", "T2"});
  ConfusionMatrix cm(3);
  std::vector<int> truth{0, 1}, pred{0, 1};
  cm.accumulate(pred, truth);
  std::ostringstream os;
  write_report(os, compute_metrics(cm), default_class_names(3));
  CHECK(os.str() ==
        "class_id\tname\tiou\n0\tBG\t1.000000\n1\tT1\t1.000000\n2\tT2\tnan\n# OA\t1.000000\n"
        "# mIoU\t1.000000\t(undefined classes excluded)\n");
}
