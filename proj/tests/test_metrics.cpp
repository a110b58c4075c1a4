#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "hetnet/metrics.hpp"
#include "test_util.hpp"

using namespace hetnet;
using namespace hetnet::testutil;

namespace {

struct BruteCounts {
  double abs_err = 0.0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Pixel-enumeration oracle independent of the metrics implementation.
BruteCounts enumerate(const Tensor& pred, const Tensor& gt, double thr) {
  BruteCounts c;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    c.abs_err += std::abs(pred.data()[i] - gt.data()[i]);
    const bool p = pred.data()[i] >= thr;
    const bool g = gt.data()[i] >= 0.5;
    c.tp += p && g;
    c.fp += p && !g;
    c.fn += !p && g;
    c.tn += !p && !g;
  }
  return c;
}

Tensor random_binary(Shape4 s, std::mt19937& rng, double p = 0.5) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = u(rng) < p ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("hand-worked 2x2 examples") {
  Tensor pred(1, 1, 2, 2), gt(1, 1, 2, 2);
  pred.at(0, 0, 0, 0) = 0.2;
  pred.at(0, 0, 0, 1) = 0.8;
  pred.at(0, 0, 1, 0) = 0.6;
  pred.at(0, 0, 1, 1) = 0.4;
  gt.at(0, 0, 0, 1) = 1.0;
  gt.at(0, 0, 1, 0) = 1.0;
  CHECK(mae(pred, gt) == doctest::Approx(0.3).epsilon(1e-12));

  Tensor p2(1, 1, 2, 2), g2(1, 1, 2, 2);
  p2.at(0, 0, 0, 0) = 1.0;
  p2.at(0, 0, 1, 0) = 1.0;
  g2.at(0, 0, 0, 0) = 1.0;
  g2.at(0, 0, 0, 1) = 1.0;
  CHECK(iou(p2, g2) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("degenerate and convention cases") {
  Tensor zeros(1, 1, 3, 3);
  Tensor half = Tensor::full({1, 1, 3, 3}, 0.5);
  CHECK(mae(zeros, zeros) == 0.0);
  CHECK(mae(half, zeros) == 0.5);
  CHECK(iou(zeros, zeros) == 1.0);     // both empty
  CHECK(f_beta(zeros, zeros) == 1.0);  // both empty
  Tensor some(1, 1, 3, 3);
  some.at(0, 0, 1, 1) = 1.0;
  CHECK(f_beta(zeros, some) == 0.0);  // nothing predicted against a nonempty mask
  CHECK(f_beta(some, zeros) == 0.0);
  CHECK(iou(some, some) == 1.0);
  CHECK(f_beta(some, some) == 1.0);
  CHECK_THROWS_AS(mae(zeros, Tensor(1, 1, 2, 2)), InputError);
}

TEST_CASE("precision equal to recall collapses f_beta to that value for any beta") {
  // with p == r the formula reduces to (1+b)pr/((b+1)p) = r
  const double p = 0.5, r = 0.5;
  for (double beta_sq : {0.3, 1.0, 2.0}) {
    const double f = (1.0 + beta_sq) * p * r / (beta_sq * p + r);
    CHECK(f == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("metrics match the pixel-enumeration oracle on 1000 random 16x16 instances") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor pred(1, 1, 16, 16);
    for (std::int64_t i = 0; i < pred.numel(); ++i) pred.data()[i] = u(rng);
    Tensor gt = random_binary({1, 1, 16, 16}, rng);
    const double thr = 0.25 + 0.5 * u(rng);
    const BruteCounts c = enumerate(pred, gt, thr);

    CHECK(std::abs(mae(pred, gt) - c.abs_err / 256.0) < 1e-9);

    const double expected_iou =
        (c.tp + c.fp + c.fn) == 0 ? 1.0
                                  : static_cast<double>(c.tp) /
                                        static_cast<double>(c.tp + c.fp + c.fn);
    CHECK(std::abs(iou(pred, gt, thr) - expected_iou) < 1e-9);

    double expected_f;
    if (c.tp == 0) {
      expected_f = (c.fp == 0 && c.fn == 0) ? 1.0 : 0.0;
    } else {
      const double precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
      const double recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
      expected_f = 1.3 * precision * recall / (0.3 * precision + recall);
    }
    CHECK(std::abs(f_beta(pred, gt, thr) - expected_f) < 1e-9);
  }
}

TEST_CASE("f_beta returns r when precision == recall == r, 20 random r") {
  std::mt19937 rng(2);
  std::uniform_int_distribution<int> counts(1, 40);
  for (int trial = 0; trial < 20; ++trial) {
    // construct a mask pair with FP == FN so precision == recall
    const int tp = counts(rng), err = counts(rng);
    const int n = tp + 2 * err + 8;
    Tensor pred(1, 1, 1, n), gt(1, 1, 1, n);
    std::int64_t pos = 0;
    for (int i = 0; i < tp; ++i, ++pos) {
      pred.data()[pos] = 1.0;
      gt.data()[pos] = 1.0;
    }
    for (int i = 0; i < err; ++i, ++pos) pred.data()[pos] = 1.0;  // false positives
    for (int i = 0; i < err; ++i, ++pos) gt.data()[pos] = 1.0;    // false negatives
    const double r = static_cast<double>(tp) / static_cast<double>(tp + err);
    CHECK(f_beta(pred, gt) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("mae symmetry under complementing both maps") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor pred(1, 1, 8, 8);
  for (std::int64_t i = 0; i < pred.numel(); ++i) pred.data()[i] = u(rng);
  Tensor gt = random_binary({1, 1, 8, 8}, rng);
  Tensor ip(pred.shape()), ig(gt.shape());
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    ip.data()[i] = 1.0 - pred.data()[i];
    ig.data()[i] = 1.0 - gt.data()[i];
  }
  CHECK(mae(pred, gt) == doctest::Approx(mae(ip, ig)).epsilon(1e-12));
}

TEST_CASE("metrics are invariant under a shared spatial permutation") {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor pred(1, 1, 1, 64), gt = random_binary({1, 1, 1, 64}, rng);
  for (std::int64_t i = 0; i < 64; ++i) pred.data()[i] = u(rng);
  std::vector<std::int64_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor pp(pred.shape()), pg(gt.shape());
  for (std::int64_t i = 0; i < 64; ++i) {
    pp.data()[i] = pred.data()[perm[static_cast<std::size_t>(i)]];
    pg.data()[i] = gt.data()[perm[static_cast<std::size_t>(i)]];
  }
  CHECK(mae(pp, pg) == doctest::Approx(mae(pred, gt)).epsilon(1e-12));
  CHECK(iou(pp, pg) == doctest::Approx(iou(pred, gt)).epsilon(1e-12));
  CHECK(f_beta(pp, pg) == doctest::Approx(f_beta(pred, gt)).epsilon(1e-12));
}

TEST_CASE("predicted-positive count is non-increasing in the threshold") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor pred(1, 1, 12, 12);
  for (std::int64_t i = 0; i < pred.numel(); ++i) pred.data()[i] = u(rng);
  std::int64_t prev = pred.numel() + 1;
  for (double thr = 0.0; thr <= 1.0; thr += 0.1) {
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < pred.numel(); ++i) count += pred.data()[i] >= thr;
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("dataset evaluation averages per-image metrics") {
  Tensor perfect = Tensor::full({1, 1, 4, 4}, 1.0);
  MetricReport single = evaluate_dataset({{perfect, perfect}});
  CHECK(single.mae == 0.0);
  CHECK(single.iou == 1.0);
  CHECK(single.f_beta == 1.0);
  CHECK(single.n_images == 1);

  // two images with MAE 0.1 and 0.3 average to 0.2
  Tensor gt(1, 1, 2, 2);
  Tensor a = Tensor::full({1, 1, 2, 2}, 0.1);
  Tensor b = Tensor::full({1, 1, 2, 2}, 0.3);
  MetricReport two = evaluate_dataset({{a, gt}, {b, gt}});
  CHECK(two.mae == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(two.n_images == 2);

  CHECK_THROWS_AS(evaluate_dataset({}), InputError);
}

TEST_CASE("adaptive threshold is twice the mean, clamped below one") {
  Tensor low = Tensor::full({1, 1, 4, 4}, 0.2);
  CHECK(adaptive_threshold(low) == doctest::Approx(0.4).epsilon(1e-12));
  Tensor high = Tensor::full({1, 1, 4, 4}, 0.9);
  CHECK(adaptive_threshold(high) < 1.0);
}
