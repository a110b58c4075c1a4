#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hetnet/nn.hpp"
#include "test_util.hpp"

using namespace hetnet;
using namespace hetnet::testutil;

TEST_CASE("tensor basics") {
  Tensor t(2, 3, 4, 5);
  CHECK(t.numel() == 120);
  t.at(1, 2, 3, 4) = 7.0;
  CHECK(t.data()[119] == 7.0);
  CHECK(sum(t) == doctest::Approx(7.0));
  CHECK(all_finite(t));
}

TEST_CASE("rot90 counterclockwise on a 2x2 plane") {
  // [[a,b],[c,d]] rotated once counterclockwise is [[b,d],[a,c]]
  Tensor in(1, 1, 2, 2);
  in.at(0, 0, 0, 0) = 1;  // a
  in.at(0, 0, 0, 1) = 2;  // b
  in.at(0, 0, 1, 0) = 3;  // c
  in.at(0, 0, 1, 1) = 4;  // d
  Tensor out = ops::rot90(in, 1);
  CHECK(out.at(0, 0, 0, 0) == 2);
  CHECK(out.at(0, 0, 0, 1) == 4);
  CHECK(out.at(0, 0, 1, 0) == 1);
  CHECK(out.at(0, 0, 1, 1) == 3);
}

TEST_CASE("rot90 round trip is the identity for every d in [-4, 4]") {
  std::mt19937 rng(11);
  Tensor in = random_tensor({2, 3, 5, 7}, rng);
  for (int d = -4; d <= 4; ++d) {
    Tensor round = ops::rot90(ops::rot90(in, d), -d);
    CHECK(max_abs_diff(round, in) == 0.0);
  }
  // odd rotations swap the spatial axes
  CHECK(ops::rot90(in, 1).shape() == Shape4{2, 3, 7, 5});
  CHECK(ops::rot90(in, 2).shape() == Shape4{2, 3, 5, 7});
}

TEST_CASE("backward through add/mul/affine matches finite differences") {
  std::mt19937 rng(5);
  Variable a(random_tensor({2, 3, 4, 4}, rng), true);
  Variable b(random_tensor({2, 3, 4, 4}, rng), true);
  auto forward = [&]() {
    return ops::mean_all(ops::mul(ops::affine(a, 1.5, -0.25), ops::add(a, b)));
  };
  CHECK(gradcheck_max_err(forward, {a, b}, 24, rng) < 1e-6);
}

TEST_CASE("broadcast mul gradients reduce over the broadcast axes") {
  std::mt19937 rng(6);
  Variable row(random_tensor({2, 4, 5, 1}, rng), true);
  Variable col(random_tensor({2, 4, 1, 7}, rng), true);
  Variable full(random_tensor({2, 4, 5, 7}, rng), true);
  auto forward = [&]() { return ops::mean_all(ops::mul(ops::mul(row, col), full)); };
  CHECK(gradcheck_max_err(forward, {row, col, full}, 20, rng) < 1e-6);
}

TEST_CASE("conv2d forward matches a dense reference") {
  std::mt19937 rng(7);
  const ops::ConvSpec spec{3, 2, 1, 2, 1};
  Variable x(random_tensor({1, 2, 9, 9}, rng), false);
  Variable w(random_tensor({3, 2, 3, 3}, rng), false);
  Variable bias(random_tensor({1, 3, 1, 1}, rng), false);
  Variable y = ops::conv2d(x, w, bias, spec);
  const Shape4 os = y.shape();
  CHECK(os == Shape4{1, 3, ops::conv_out_size(9, spec), ops::conv_out_size(9, spec)});
  // reference: direct summation
  for (std::int64_t oc = 0; oc < os.c; ++oc)
    for (std::int64_t oy = 0; oy < os.h; ++oy)
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        double acc = bias.value().data()[oc];
        for (std::int64_t ic = 0; ic < 2; ++ic)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const std::int64_t iy = oy * spec.stride - spec.pad + ky * spec.dilation;
              const std::int64_t ix = ox * spec.stride - spec.pad + kx * spec.dilation;
              if (iy < 0 || iy >= 9 || ix < 0 || ix >= 9) continue;
              acc += w.value().at(oc, ic, ky, kx) * x.value().at(0, ic, iy, ix);
            }
        CHECK(y.value().at(0, oc, oy, ox) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("conv2d gradients: stride, padding, dilation, groups, bias") {
  std::mt19937 rng(8);
  struct Case {
    ops::ConvSpec spec;
    int in_ch, out_ch;
  };
  const std::vector<Case> cases = {
      {{3, 1, 1, 1, 1}, 3, 4}, {{3, 2, 1, 1, 1}, 2, 5}, {{3, 1, 2, 2, 1}, 2, 3},
      {{1, 1, 0, 1, 1}, 4, 2}, {{3, 1, 1, 1, 2}, 4, 4}, {{3, 4, 1, 1, 1}, 2, 2},
  };
  for (const auto& c : cases) {
    CAPTURE(c.spec.kernel);
    CAPTURE(c.spec.stride);
    CAPTURE(c.spec.groups);
    Variable x(random_tensor({2, c.in_ch, 8, 8}, rng), true);
    Variable w(random_tensor({c.out_ch, c.in_ch / c.spec.groups, c.spec.kernel, c.spec.kernel},
                             rng),
               true);
    Variable bias(random_tensor({1, c.out_ch, 1, 1}, rng), true);
    auto forward = [&]() { return ops::mean_all(ops::swish(ops::conv2d(x, w, bias, c.spec))); };
    CHECK(gradcheck_max_err(forward, {x, w, bias}, 16, rng) < 1e-5);
  }
}

TEST_CASE("activation, pooling and resize gradients") {
  std::mt19937 rng(9);
  Variable x(random_tensor({2, 3, 6, 6}, rng), true);

  auto relu_f = [&]() { return ops::mean_all(ops::relu(x)); };
  CHECK(gradcheck_max_err(relu_f, {x}, 20, rng) < 1e-5);

  auto sig_f = [&]() { return ops::mean_all(ops::sigmoid(x)); };
  CHECK(gradcheck_max_err(sig_f, {x}, 20, rng) < 1e-6);

  auto pool_f = [&]() { return ops::mean_all(ops::adaptive_avg_pool(x, 2, 3)); };
  CHECK(gradcheck_max_err(pool_f, {x}, 20, rng) < 1e-6);

  auto max_f = [&]() { return ops::mean_all(ops::max_pool(x, 3, 2, 1)); };
  CHECK(gradcheck_max_err(max_f, {x}, 20, rng) < 1e-5);

  auto up_f = [&]() { return ops::mean_all(ops::bilinear_upsample(x, 11, 13)); };
  CHECK(gradcheck_max_err(up_f, {x}, 20, rng) < 1e-6);

  auto rot_f = [&]() { return ops::mean_all(ops::mul(ops::rot90(x, 1), ops::rot90(x, -1))); };
  CHECK(gradcheck_max_err(rot_f, {x}, 20, rng) < 1e-6);

  auto axis_f = [&]() {
    return ops::mean_all(ops::mul(ops::mean_over_w(x), ops::mean_over_h(x)));
  };
  CHECK(gradcheck_max_err(axis_f, {x}, 20, rng) < 1e-6);
}

TEST_CASE("concat/slice/transpose gradients") {
  std::mt19937 rng(10);
  Variable a(random_tensor({2, 3, 4, 5}, rng), true);
  Variable b(random_tensor({2, 2, 4, 5}, rng), true);
  auto cat_f = [&]() {
    Variable cat = ops::concat({a, b}, 1);
    Variable left = ops::slice(cat, 1, 0, 3);
    return ops::mean_all(ops::mul(left, left));
  };
  CHECK(gradcheck_max_err(cat_f, {a, b}, 20, rng) < 1e-6);

  Variable c(random_tensor({2, 3, 4, 1}, rng), true);
  Variable d(random_tensor({2, 3, 6, 1}, rng), true);
  auto len_f = [&]() {
    Variable cat = ops::concat({c, d}, 2);
    return ops::mean_all(ops::mul(ops::transpose_hw(cat), ops::transpose_hw(cat)));
  };
  CHECK(gradcheck_max_err(len_f, {c, d}, 12, rng) < 1e-6);
}

TEST_CASE("reduction and bce gradients") {
  std::mt19937 rng(12);
  Variable x(random_tensor({3, 2, 4, 4}, rng), true);
  Tensor target(3, 2, 4, 4);
  for (std::int64_t i = 0; i < target.numel(); ++i) target.data()[i] = (i % 3 == 0) ? 1.0 : 0.0;

  auto bce_f = [&]() { return ops::mean_all(ops::bce_with_logits(x, target)); };
  CHECK(gradcheck_max_err(bce_f, {x}, 24, rng) < 1e-6);

  auto img_f = [&]() {
    Variable s = ops::sum_per_image(x);
    return ops::mean_all(ops::div(s, ops::affine(ops::mul(s, s), 1.0, 10.0)));
  };
  CHECK(gradcheck_max_err(img_f, {x}, 24, rng) < 1e-6);
}

TEST_CASE("bce_with_logits is stable at saturated logits") {
  Tensor logits(1, 1, 1, 2);
  logits.data()[0] = 500.0;
  logits.data()[1] = -500.0;
  Tensor target(1, 1, 1, 2);
  target.data()[0] = 1.0;
  target.data()[1] = 0.0;
  Variable x(logits, false);
  Variable loss = ops::bce_with_logits(x, target);
  CHECK(all_finite(loss.value()));
  CHECK(loss.value().data()[0] == doctest::Approx(0.0));
  CHECK(loss.value().data()[1] == doctest::Approx(0.0));
}

TEST_CASE("batchnorm training and eval gradients") {
  std::mt19937 rng(13);
  BatchNorm2d bn(3);
  Variable x(random_tensor({4, 3, 5, 5}, rng), true);

  bn.set_train(true);
  auto train_f = [&]() { return ops::mean_all(ops::swish(bn.forward(x))); };
  // the 1/sqrt(var) curvature leaves a few 1e-5 of central-difference truncation
  CHECK(gradcheck_max_err(train_f, {x, bn.gamma, bn.beta}, 16, rng) < 1e-4);

  bn.set_train(false);
  bn.running_mean = random_tensor({1, 3, 1, 1}, rng);
  bn.running_var = random_tensor({1, 3, 1, 1}, rng, 0.5, 2.0);
  auto eval_f = [&]() { return ops::mean_all(ops::swish(bn.forward(x))); };
  CHECK(gradcheck_max_err(eval_f, {x, bn.gamma, bn.beta}, 16, rng) < 1e-5);
}

TEST_CASE("batchnorm normalizes batch statistics in training mode") {
  std::mt19937 rng(14);
  BatchNorm2d bn(2);
  bn.set_train(true);
  Variable x(random_tensor({8, 2, 6, 6}, rng, -3.0, 5.0), false);
  Variable y = bn.forward(x);
  for (std::int64_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    std::int64_t n = 0;
    for (std::int64_t b = 0; b < 8; ++b) {
      const double* p = y.value().plane(b, c);
      for (std::int64_t i = 0; i < 36; ++i) {
        m += p[i];
        ++n;
      }
    }
    m /= static_cast<double>(n);
    for (std::int64_t b = 0; b < 8; ++b) {
      const double* p = y.value().plane(b, c);
      for (std::int64_t i = 0; i < 36; ++i) v += (p[i] - m) * (p[i] - m);
    }
    v /= static_cast<double>(n);
    CHECK(m == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("no-grad forwards do not record a tape") {
  std::mt19937 rng(15);
  Variable x(random_tensor({1, 2, 3, 3}, rng), true);
  NoGradGuard guard;
  Variable y = ops::relu(x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}
