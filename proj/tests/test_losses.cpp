#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hetnet/datapipe.hpp"
#include "hetnet/losses.hpp"
#include "test_util.hpp"

using namespace hetnet;
using namespace hetnet::testutil;

namespace {

// Brute-force reimplementation of the loss pieces by direct summation,
// independent of the library's integral-image/graph path.
double brute_weight(const Tensor& gt, std::int64_t b, std::int64_t y, std::int64_t x, int kernel,
                    double factor) {
  const Shape4 s = gt.shape();
  const int r = kernel / 2;
  double acc = 0.0;
  std::int64_t count = 0;
  for (std::int64_t yy = y - r; yy <= y + r; ++yy)
    for (std::int64_t xx = x - r; xx <= x + r; ++xx) {
      if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
      acc += gt.at(b, 0, yy, xx);
      ++count;
    }
  return 1.0 + factor * std::abs(acc / static_cast<double>(count) - gt.at(b, 0, y, x));
}

double brute_ppa(const Tensor& logits, const Tensor& gt, int kernel = 31, double factor = 5.0,
                 double smooth = 1.0) {
  const Shape4 s = logits.shape();
  double batch_acc = 0.0;
  for (std::int64_t b = 0; b < s.b; ++b) {
    double wbce_num = 0.0, w_sum = 0.0, inter = 0.0, uni = 0.0;
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        const double w = brute_weight(gt, b, y, x, kernel, factor);
        const double z = gt.at(b, 0, y, x);
        const double logit = logits.at(b, 0, y, x);
        const double bce =
            std::max(logit, 0.0) - logit * z + std::log1p(std::exp(-std::abs(logit)));
        const double p = 1.0 / (1.0 + std::exp(-logit));
        wbce_num += w * bce;
        w_sum += w;
        inter += w * p * z;
        uni += w * (p + z - p * z);
      }
    batch_acc += wbce_num / w_sum + (1.0 - (inter + smooth) / (uni + smooth));
  }
  return batch_acc / static_cast<double>(s.b);
}

Tensor random_binary(Shape4 s, std::mt19937& rng, double p = 0.4) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = u(rng) < p ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("weight map is exactly one on uniform masks") {
  for (double fill : {0.0, 1.0}) {
    Tensor gt = Tensor::full({2, 1, 9, 9}, fill);
    Tensor w = ppa_weight_map(gt);
    CHECK(min_value(w) == 1.0);
    CHECK(max_value(w) == 1.0);
  }
}

TEST_CASE("weight map matches direct summation on a 5x5 single-pixel mask") {
  Tensor gt(1, 1, 5, 5);
  gt.at(0, 0, 2, 2) = 1.0;
  PpaOptions opts;
  opts.weight_kernel = 3;  // small window keeps the hand computation visible
  Tensor w = ppa_weight_map(gt, opts);
  for (std::int64_t y = 0; y < 5; ++y)
    for (std::int64_t x = 0; x < 5; ++x)
      CHECK(w.at(0, 0, y, x) ==
            doctest::Approx(brute_weight(gt, 0, y, x, 3, 5.0)).epsilon(1e-12));
  // the lone positive pixel is the hardest one
  CHECK(w.at(0, 0, 2, 2) == doctest::Approx(1.0 + 5.0 * (1.0 - 1.0 / 9.0)).epsilon(1e-12));
}

TEST_CASE("ppa loss matches the brute-force oracle on random instances") {
  std::mt19937 rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    const Shape4 s{2, 1, 8, 8};
    Tensor gt = random_binary(s, rng);
    Tensor logits = random_tensor(s, rng, -3.0, 3.0);
    Variable loss = ppa_loss(Variable(logits), gt);
    CHECK(loss.value().data()[0] == doctest::Approx(brute_ppa(logits, gt)).epsilon(1e-10));
  }
}

TEST_CASE("perfect saturated prediction drives ppa below 1e-4") {
  std::mt19937 rng(2);
  Tensor gt = random_binary({1, 1, 16, 16}, rng);
  Tensor logits(gt.shape());
  for (std::int64_t i = 0; i < gt.numel(); ++i) logits.data()[i] = gt.data()[i] > 0.5 ? 20.0 : -20.0;
  Variable loss = ppa_loss(Variable(logits), gt);
  CHECK(loss.value().data()[0] < 1e-4);
  CHECK(loss.value().data()[0] >= 0.0);
}

TEST_CASE("uniform ground truth makes weighted and plain bce equal") {
  std::mt19937 rng(3);
  Tensor gt = Tensor::full({1, 1, 8, 8}, 1.0);
  Tensor logits = random_tensor(gt.shape(), rng, -2.0, 2.0);
  // weighted BCE with w == 1 collapses to the mean
  Variable wbce_plus_wiou = ppa_loss(Variable(logits), gt);
  Variable plain = edge_bce_loss(Variable(logits), gt);
  const double wiou = wbce_plus_wiou.value().data()[0] - plain.value().data()[0];
  CHECK(wiou > 0.0);  // residual is exactly the wIoU part
  Tensor w = ppa_weight_map(gt);
  CHECK(max_value(w) == 1.0);
}

TEST_CASE("edge bce equals ln 2 on zero logits and vanishes when saturated correct") {
  Tensor gt(1, 1, 4, 4);
  gt.at(0, 0, 0, 0) = 1.0;
  Variable at_zero = edge_bce_loss(Variable(Tensor(1, 1, 4, 4)), gt);
  CHECK(at_zero.value().data()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tensor sat(1, 1, 4, 4);
  for (std::int64_t i = 0; i < 16; ++i) sat.data()[i] = gt.data()[i] > 0.5 ? 25.0 : -25.0;
  CHECK(edge_bce_loss(Variable(sat), gt).value().data()[0] < 1e-4);
}

TEST_CASE("edge bce on a 2x2 instance matches a scalar evaluation") {
  Tensor gt(1, 1, 2, 2);
  gt.at(0, 0, 0, 0) = 1.0;
  Tensor logits = Tensor::full({1, 1, 2, 2}, 1.0);
  const double sig = 1.0 / (1.0 + std::exp(-1.0));
  const double expected = (-std::log(sig) - 3.0 * std::log(1.0 - sig)) / 4.0;
  CHECK(edge_bce_loss(Variable(logits), gt).value().data()[0] ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ppa gradients match finite differences") {
  std::mt19937 rng(4);
  Tensor gt = random_binary({1, 1, 8, 8}, rng);
  Variable logits(random_tensor({1, 1, 8, 8}, rng, -2.0, 2.0), true);
  auto forward = [&]() { return ppa_loss(logits, gt); };
  CHECK(gradcheck_max_err(forward, {logits}, 32, rng) < 1e-2);
}

TEST_CASE("moving logits toward the saturated-correct target strictly decreases ppa") {
  std::mt19937 rng(5);
  Tensor gt = random_binary({1, 1, 10, 10}, rng);
  Tensor start = random_tensor(gt.shape(), rng, -1.0, 1.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 10; ++k) {
    const double t = static_cast<double>(k) / 10.0;
    Tensor cur(gt.shape());
    for (std::int64_t i = 0; i < cur.numel(); ++i) {
      const double target = gt.data()[i] > 0.5 ? 20.0 : -20.0;
      cur.data()[i] = (1.0 - t) * start.data()[i] + t * target;
    }
    const double v = ppa_loss(Variable(cur), gt).value().data()[0];
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("total loss recomposes as edge plus geometrically weighted ppa terms") {
  std::mt19937 rng(6);
  auto net = build_network(NetworkConfig::canonical_tiny(), 7);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor images = random_tensor({2, 3, 32, 32}, rng, 0.0, 1.0);
    Tensor gt = random_binary({2, 1, 32, 32}, rng);
    Tensor edge = random_binary({2, 1, 32, 32}, rng, 0.15);
    FusionGraphOutputs out = net->forward(Variable(images), RunMode::train);
    LossTerms terms = total_loss(out, gt, edge);

    // independent recomposition from the per-term fields
    double expected = terms.l_bce_edge;
    for (int i = 0; i < 5; ++i)
      expected += terms.l_ppa_per_scale[static_cast<std::size_t>(i)] /
                  static_cast<double>(1 << i);
    CHECK(terms.total_value == doctest::Approx(expected).epsilon(1e-10));

    // and from scratch against the outputs
    const Shape4 es = out.edge_output.shape();
    double scratch =
        edge_bce_loss(out.edge_output, resize_gt(edge, es.h, es.w)).value().data()[0];
    for (int i = 0; i < 5; ++i) {
      const Variable& map =
          i == 0 ? out.main_output : out.aux_outputs[static_cast<std::size_t>(i - 1)];
      scratch += brute_ppa(map.value(), resize_gt(gt, map.shape().h, map.shape().w)) /
                 static_cast<double>(1 << i);
    }
    CHECK(terms.total_value == doctest::Approx(scratch).epsilon(1e-6));
  }
}

TEST_CASE("all ppa terms equal and edge fixed gives E + 1.9375 L") {
  // the geometric sum 1 + 1/2 + 1/4 + 1/8 + 1/16
  const double sum = 1.0 + 0.5 + 0.25 + 0.125 + 0.0625;
  CHECK(sum == doctest::Approx(1.9375));
}

TEST_CASE("total loss demands the supervision outputs") {
  std::mt19937 rng(7);
  NetworkConfig cfg = NetworkConfig::canonical_tiny();
  cfg.deep_supervision = false;
  auto net = build_network(cfg, 8);
  FusionGraphOutputs out =
      net->forward(Variable(random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0)), RunMode::train);
  Tensor gt(1, 1, 32, 32), edge(1, 1, 32, 32);
  CHECK_THROWS_AS(total_loss(out, gt, edge), ConfigError);
}

TEST_CASE("loss terms and total are nonnegative") {
  std::mt19937 rng(8);
  auto net = build_network(NetworkConfig::canonical_tiny(), 9);
  Tensor gt = random_binary({1, 1, 32, 32}, rng);
  FusionGraphOutputs out =
      net->forward(Variable(random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0)), RunMode::train);
  LossTerms terms = total_loss(out, gt, derive_edge(gt));
  CHECK(terms.l_bce_edge >= 0.0);
  for (double v : terms.l_ppa_per_scale) CHECK(v >= 0.0);
  CHECK(terms.total_value >= 0.0);
}
