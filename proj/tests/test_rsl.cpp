#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hetnet/rsl.hpp"
#include "test_util.hpp"

using namespace hetnet;
using namespace hetnet::testutil;

namespace {

// Independent receptive-field oracle: propagate the influence set of one
// output position backwards through the conv chain on a 1D axis.
int brute_force_rf(const std::vector<std::pair<int, int>>& convs /* (kernel, dilation) */) {
  const int n = 257, center = n / 2;
  std::vector<char> dep(static_cast<std::size_t>(n), 0);
  dep[static_cast<std::size_t>(center)] = 1;
  for (auto it = convs.rbegin(); it != convs.rend(); ++it) {
    std::vector<char> next(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) {
      if (!dep[static_cast<std::size_t>(i)]) continue;
      for (int t = 0; t < it->first; ++t) {
        const int j = i + (t - it->first / 2) * it->second;
        if (j >= 0 && j < n) next[static_cast<std::size_t>(j)] = 1;
      }
    }
    dep = next;
  }
  int lo = n, hi = -1;
  for (int i = 0; i < n; ++i)
    if (dep[static_cast<std::size_t>(i)]) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  return hi - lo + 1;
}

// Chebyshev radius of the nonzero input-gradient region around the center.
int empirical_radius(const Tensor& grad, double tol = 1e-12) {
  const Shape4 s = grad.shape();
  const std::int64_t cy = s.h / 2, cx = s.w / 2;
  int radius = 0;
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x)
        if (std::abs(grad.at(0, c, y, x)) > tol)
          radius = std::max<int>(radius, static_cast<int>(std::max(std::abs(y - cy),
                                                                   std::abs(x - cx))));
  return radius;
}

void zero_all_biases(Rsl& rsl) {
  rsl.for_each_state("", [&](const std::string& key, Tensor& t, bool) {
    if (key.ends_with(".bias")) t.fill(0.0);
  });
}

}  // namespace

TEST_CASE("analytic receptive fields match the brute-force oracle") {
  std::mt19937 rng(1);
  Rsl rsl(rng, 8, 8);
  const std::vector<int> rf = rsl.receptive_fields();
  REQUIRE(rf.size() == 4);
  CHECK(rf == std::vector<int>{1, 21, 27, 1});
  CHECK(brute_force_rf({{1, 1}}) == rf[0]);
  CHECK(brute_force_rf({{1, 1}, {7, 1}, {3, 7}}) == rf[1]);
  CHECK(brute_force_rf({{1, 1}, {7, 1}, {7, 1}, {3, 7}}) == rf[2]);
  CHECK(brute_force_rf({{1, 1}}) == rf[3]);
}

TEST_CASE("composition law on simple chains") {
  CHECK(receptive_field({{1, 1, 1}}) == 1);
  CHECK(receptive_field({{3, 1, 1}, {3, 1, 1}}) == 5);  // two plain 3x3 convs
  CHECK(brute_force_rf({{3, 1}, {3, 1}}) == 5);
}

TEST_CASE("output keeps the spatial size and is nonnegative") {
  std::mt19937 rng(2);
  Rsl rsl(rng, 16, 8);
  rsl.set_train(false);
  NoGradGuard guard;
  Variable y = rsl.forward(Variable(random_tensor({2, 16, 11, 11}, rng)));
  CHECK(y.shape() == Shape4{2, 8, 11, 11});
  CHECK(min_value(y.value()) >= 0.0);
  CHECK_THROWS_AS(rsl.forward(Variable(Tensor(1, 4, 8, 8))), ConfigError);
}

TEST_CASE("zero input with zeroed biases produces exactly zero output") {
  std::mt19937 rng(3);
  Rsl rsl(rng, 8, 8);
  zero_all_biases(rsl);
  rsl.set_train(false);
  NoGradGuard guard;
  Variable y = rsl.forward(Variable(Tensor(1, 8, 9, 9)));
  CHECK(max_value(y.value()) == 0.0);
  CHECK(min_value(y.value()) == 0.0);
}

TEST_CASE("empirical gradient footprint never exceeds the analytic receptive field") {
  std::mt19937 rng(4);
  Rsl rsl(rng, 4, 4);
  rsl.set_train(false);  // frozen normalization keeps the computation spatially local

  const std::vector<int> analytic = rsl.receptive_fields();
  Tensor input = random_tensor({1, 4, 63, 63}, rng, 0.1, 1.0);

  auto branch_out = [&](int branch, const Variable& x) {
    switch (branch) {
      case 0:
        return rsl.b1_bn.forward(rsl.b1_conv.forward(x));
      case 1:
        return rsl.b2_bn.forward(rsl.b2_c3.forward(rsl.b2_c2.forward(rsl.b2_c1.forward(x))));
      case 2:
        return rsl.b3_bn.forward(
            rsl.b3_c4.forward(rsl.b3_c3.forward(rsl.b3_c2.forward(rsl.b3_c1.forward(x)))));
      default:
        return rsl.b4_bn.forward(rsl.b4_conv.forward(x));
    }
  };

  for (int branch = 0; branch < 4; ++branch) {
    CAPTURE(branch);
    Variable x(input, true);
    Variable out = branch_out(branch, x);
    // gradient of the center pixel summed over channels
    Tensor pick(out.shape());
    pick.at(0, 0, out.shape().h / 2, out.shape().w / 2) = 1.0;
    for (std::int64_t c = 1; c < out.shape().c; ++c)
      pick.at(0, c, out.shape().h / 2, out.shape().w / 2) = 1.0;
    backward(ops::mean_all(ops::mul_const(out, pick)));
    const int radius = empirical_radius(x.grad());
    const int allowed = (analytic[static_cast<std::size_t>(branch)] - 1) / 2;
    CHECK(radius <= allowed);
    CHECK(radius > allowed - 2);  // random weights reach the analytic extent
  }

  // whole module: branches plus the 3x3 merge conv
  Variable x(input, true);
  Variable out = rsl.forward(x);
  Tensor pick(out.shape());
  for (std::int64_t c = 0; c < out.shape().c; ++c)
    pick.at(0, c, out.shape().h / 2, out.shape().w / 2) = 1.0;
  backward(ops::mean_all(ops::mul_const(out, pick)));
  const int module_allowed = (27 + 2 - 1) / 2;  // widest branch then one 3x3
  CHECK(empirical_radius(x.grad()) <= module_allowed);
}

TEST_CASE("rsl gradients match finite differences") {
  // seeded so no sampled probe lands within eps of a ReLU kink
  std::mt19937 rng(6);
  Rsl rsl(rng, 4, 4);
  rsl.set_train(true);
  Variable x(random_tensor({1, 4, 8, 8}, rng), true);
  std::vector<Variable> vars{x};
  rsl.for_each_param("", [&](const std::string&, Variable& v) { vars.push_back(v); });
  auto forward = [&]() { return ops::mean_all(rsl.forward(x)); };
  CHECK(gradcheck_max_err(forward, vars, 4, rng) < 1e-2);
}
