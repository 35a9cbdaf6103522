#include <catch2/catch_amalgamated.hpp>

#include "support/fd.hpp"

using namespace snndhz;
using fdtest::wrap;

TEST_CASE("mse oracle values") {
  Val z = wrap(Tensor::zeros({2, 3}));
  Val o = wrap(Tensor::full({2, 3}, 1.0f));
  REQUIRE(mse_loss(z, z).t->data[0] == 0.0f);
  REQUIRE(mse_loss(z, o).t->data[0] == 1.0f);
  Val a = wrap(Tensor({2}, {0, 0}));
  Val b = wrap(Tensor({2}, {1, 0}));
  REQUIRE(mse_loss(a, b).t->data[0] == 0.5f);
}

TEST_CASE("gaussian window is normalized, symmetric and center-peaked") {
  Tensor g = gaussian_window(11, 1.5f);
  double total = 0.0;
  for (float v : g.data) total += v;
  REQUIRE(total == Catch::Approx(1.0).margin(1e-6));
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      REQUIRE(g.data[i * 11 + j] == g.data[(10 - i) * 11 + (10 - j)]);
      REQUIRE(g.data[i * 11 + j] == g.data[j * 11 + i]);
      REQUIRE(g.data[i * 11 + j] <= g.data[5 * 11 + 5]);
    }
}

TEST_CASE("ssim of an image with itself is 1") {
  Rng rng(601);
  Val y = wrap(rng.uniform_tensor({3, 16, 16}, 0, 1));
  REQUIRE(ssim_value(y, y).t->data[0] == Catch::Approx(1.0f).margin(1e-6));
}

TEST_CASE("ssim is symmetric in its arguments") {
  Rng rng(607);
  Val a = wrap(rng.uniform_tensor({3, 12, 12}, 0, 1));
  Val b = wrap(rng.uniform_tensor({3, 12, 12}, 0, 1));
  REQUIRE(ssim_value(a, b).t->data[0] ==
          Catch::Approx(ssim_value(b, a).t->data[0]).margin(1e-7));
}

TEST_CASE("ssim separates flat black from flat white") {
  Val z = wrap(Tensor::zeros({1, 16, 16}));
  Val o = wrap(Tensor::full({1, 16, 16}, 1.0f));
  float s = ssim_value(z, o).t->data[0];
  REQUIRE(s < 0.01f);
  REQUIRE(s > 0.0f);  // C1/(1+C1), never exactly zero
}

TEST_CASE("ssim never exceeds 1 on arbitrary real inputs") {
  Rng rng(613);
  for (int i = 0; i < 10; ++i) {
    Val a = wrap(rng.uniform_tensor({2, 12, 12}, -2, 2));
    Val b = wrap(rng.uniform_tensor({2, 12, 12}, -2, 2));
    REQUIRE(ssim_value(a, b).t->data[0] <= 1.0f + 1e-6f);
  }
}

TEST_CASE("ssim window shrinks for small images and explicit windows must fit") {
  Rng rng(617);
  Val small = wrap(rng.uniform_tensor({1, 8, 8}, 0, 1));
  REQUIRE(std::isfinite(ssim_value(small, small).t->data[0]));  // auto 7
  REQUIRE(ssim_value(small, small).t->data[0] == Catch::Approx(1.0f).margin(1e-6));
  Val img = wrap(rng.uniform_tensor({1, 12, 12}, 0, 1));
  REQUIRE_THROWS_AS(ssim_value(img, img, 13), ShapeError);
  REQUIRE(std::isfinite(ssim_value(img, img, 11).t->data[0]));
}

TEST_CASE("tv oracle: the 2x2 checker step costs 0.25") {
  Val y = wrap(Tensor({1, 2, 2}, {0, 1, 0, 1}));
  REQUIRE(tv_loss(y).t->data[0] == 0.25f);
}

TEST_CASE("tv of any constant image is zero") {
  REQUIRE(tv_loss(wrap(Tensor::full({3, 8, 8}, 0.37f))).t->data[0] == 0.0f);
}

TEST_CASE("tv is shift-invariant and quadratic under scaling") {
  Rng rng(619);
  Tensor y0 = rng.uniform_tensor({2, 6, 6}, 0, 1);
  float base = tv_loss(wrap(y0)).t->data[0];
  Tensor shifted = y0;
  for (float& v : shifted.data) v += 0.4f;
  REQUIRE(tv_loss(wrap(shifted)).t->data[0] == Catch::Approx(base).margin(1e-6));
  Tensor scaled = y0;
  for (float& v : scaled.data) v *= 3.0f;
  REQUIRE(tv_loss(wrap(scaled)).t->data[0] == Catch::Approx(9.0f * base).margin(1e-5));
}

TEST_CASE("tv rejects degenerate spatial dims") {
  REQUIRE_THROWS_AS(tv_loss(wrap(Tensor::zeros({3, 1, 8}))), ShapeError);
}

TEST_CASE("net loss on a perfect reconstruction reduces to the smoothness term") {
  Rng rng(631);
  Tensor yt = rng.uniform_tensor({3, 16, 16}, 0, 1);
  Val y = wrap(yt);
  LossWeights w;
  float full = net_loss(y, y, w).t->data[0];
  float tv = tv_loss(y).t->data[0];
  REQUIRE(full == Catch::Approx(w.beta * tv).margin(1e-6));
}

TEST_CASE("net loss is nonnegative and grows with beta") {
  Rng rng(641);
  LossWeights lo;
  LossWeights hi;
  hi.beta = 1.0f;
  for (int i = 0; i < 8; ++i) {
    Val y = wrap(rng.uniform_tensor({3, 12, 12}, 0, 1));
    Val yh = wrap(rng.uniform_tensor({3, 12, 12}, -0.5f, 1.5f));
    float a = net_loss(y, yh, lo).t->data[0];
    float b = net_loss(y, yh, hi).t->data[0];
    REQUIRE(a >= 0.0f);
    REQUIRE(b >= a);
  }
}

TEST_CASE("loss weights default to 0.5 and 0.25 and reject negatives") {
  LossWeights w;
  REQUIRE(w.alpha == 0.5f);
  REQUIRE(w.beta == 0.25f);
  LossWeights bad;
  bad.alpha = -0.1f;
  Val y = wrap(Tensor::zeros({1, 4, 4}));
  REQUIRE_THROWS_AS(net_loss(y, y, bad), ConfigError);
}

TEST_CASE("mse gradients agree with finite differences") {
  Rng rng(643);
  Val y = wrap(rng.uniform_tensor({3, 6, 6}, 0, 1));
  Param ph("yh", rng.uniform_tensor({3, 6, 6}, 0, 1));
  Tape tp;
  tp.backward(mse_loss(tp.constant(y.t), tp.leaf(ph)));
  auto recompute = [&]() {
    return static_cast<double>(mse_loss(y, wrap(ph.value)).t->data[0]);
  };
  REQUIRE(fdtest::fd_check(*ph.value, ph.grad, recompute).max_rel < 1e-3f);
}

TEST_CASE("ssim gradients agree with finite differences") {
  Rng rng(647);
  Val y = wrap(rng.uniform_tensor({1, 12, 12}, 0, 1));
  Param ph("yh", rng.uniform_tensor({1, 12, 12}, 0, 1));
  Tape tp;
  tp.backward(ssim_value(tp.constant(y.t), tp.leaf(ph)));
  auto recompute = [&]() {
    return static_cast<double>(ssim_value(y, wrap(ph.value)).t->data[0]);
  };
  // The windowed covariance terms leave many per-pixel gradients near zero,
  // where f32 forward noise (~1.5e-4 through central differences at h=1e-3)
  // dominates any relative ratio. Floor the denominator well above that.
  REQUIRE(fdtest::fd_check(*ph.value, ph.grad, recompute, {}, 1e-3f, 0.25f).max_rel < 1e-3f);
}

TEST_CASE("tv gradients agree with finite differences") {
  Rng rng(653);
  Param ph("yh", rng.uniform_tensor({2, 6, 6}, 0, 1));
  Tape tp;
  tp.backward(tv_loss(tp.leaf(ph)));
  auto recompute = [&]() { return static_cast<double>(tv_loss(wrap(ph.value)).t->data[0]); };
  REQUIRE(fdtest::fd_check(*ph.value, ph.grad, recompute, {}, 1e-3f, 0.05f).max_rel < 1e-3f);
}

TEST_CASE("net loss gradients agree with finite differences") {
  Rng rng(659);
  Val y = wrap(rng.uniform_tensor({1, 12, 12}, 0, 1));
  Param ph("yh", rng.uniform_tensor({1, 12, 12}, 0, 1));
  LossWeights w;
  Tape tp;
  tp.backward(net_loss(tp.constant(y.t), tp.leaf(ph), w));
  auto recompute = [&]() {
    return static_cast<double>(net_loss(y, wrap(ph.value), w).t->data[0]);
  };
  REQUIRE(fdtest::fd_check(*ph.value, ph.grad, recompute, {}, 1e-3f, 0.25f).max_rel < 1e-3f);
}
