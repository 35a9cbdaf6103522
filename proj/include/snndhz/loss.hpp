#pragma once

#include "conv.hpp"

namespace snndhz {

struct LossWeights {
  float alpha = 0.5f;  // structural term weight
  float beta = 0.25f;  // smoothness term weight
};

// Mean of squared differences over all elements.
inline Val mse_loss(const Val& y, const Val& y_hat) {
  check_same_shape(*y.t, *y_hat.t, "mse");
  Val d = sub(y, y_hat);
  return mean_all(mul(d, d));
}

inline Tensor gaussian_window(int win, float sigma) {
  Tensor w = Tensor::zeros({win, win});
  float c = static_cast<float>(win - 1) / 2.0f;
  double total = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      float d2 = (i - c) * (i - c) + (j - c) * (j - c);
      float v = std::exp(-d2 / (2.0f * sigma * sigma));
      w.data[static_cast<size_t>(i * win + j)] = v;
      total += v;
    }
  for (float& v : w.data) v = static_cast<float>(v / total);
  return w;
}

// Windowed SSIM averaged over windows and channels. C1=(0.01)^2, C2=(0.03)^2
// for unit dynamic range. window == 0 picks the default 11, shrunk to the
// largest odd size that fits small images; an explicit window must fit.
inline Val ssim_value(const Val& y, const Val& y_hat, int window = 0) {
  check_same_shape(*y.t, *y_hat.t, "ssim");
  if (y.t->rank() != 3) throw ShapeError("ssim: expected [C,H,W]");
  int C = y.t->dim(0), H = y.t->dim(1), W = y.t->dim(2);
  int smaller = std::min(H, W);
  int win = window;
  if (win == 0) {
    win = std::min(11, smaller);
    if (win % 2 == 0) --win;
  } else if (win > smaller) {
    throw ShapeError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) +
                     " smaller than window " + std::to_string(win));
  }
  if (win < 1) throw ShapeError("ssim: degenerate window");

  Tensor g = gaussian_window(win, 1.5f);
  Tensor kt = Tensor::zeros({C, win, win});
  for (int c = 0; c < C; ++c)
    std::copy(g.data.begin(), g.data.end(), kt.data.begin() + static_cast<long>(c) * win * win);
  Tape* tp = common_tape({&y, &y_hat});
  Val kernel = make_constant(tp, std::move(kt));

  auto blur = [&](const Val& v) {
    return dwconv2d(reshape(v, {1, C, H, W}), kernel, nullptr, 0);
  };
  const float c1 = 0.01f * 0.01f, c2 = 0.03f * 0.03f;
  Val mu_a = blur(y), mu_b = blur(y_hat);
  Val mu_aa = mul(mu_a, mu_a), mu_bb = mul(mu_b, mu_b), mu_ab = mul(mu_a, mu_b);
  Val var_a = sub(blur(mul(y, y)), mu_aa);
  Val var_b = sub(blur(mul(y_hat, y_hat)), mu_bb);
  Val cov = sub(blur(mul(y, y_hat)), mu_ab);
  Val num = mul(affine(scale(mu_ab, 2.0f), 1.0f, c1), affine(scale(cov, 2.0f), 1.0f, c2));
  Val den = mul(affine(add(mu_aa, mu_bb), 1.0f, c1), affine(add(var_a, var_b), 1.0f, c2));
  return mean_all(div(num, den));
}

// Sum of squared horizontal and vertical first differences over the
// (H-1)x(W-1) interior grid (boundary row/column excluded), divided by C*H*W.
inline Val tv_loss(const Val& y_hat) {
  if (y_hat.t->rank() != 3) throw ShapeError("tv: expected [C,H,W]");
  int C = y_hat.t->dim(0), H = y_hat.t->dim(1), W = y_hat.t->dim(2);
  if (H < 2 || W < 2) throw ShapeError("tv: spatial dims must be >= 2");
  long hw = static_cast<long>(H) * W;
  double acc = 0.0;
  const float* p = y_hat.t->ptr();
  for (int c = 0; c < C; ++c) {
    const float* pc = p + c * hw;
    for (int i = 0; i + 1 < H; ++i)
      for (int j = 0; j + 1 < W; ++j) {
        float dv = pc[(i + 1) * W + j] - pc[i * W + j];
        float dh = pc[i * W + j + 1] - pc[i * W + j];
        acc += static_cast<double>(dv) * dv + static_cast<double>(dh) * dh;
      }
  }
  float norm = 1.0f / static_cast<float>(C * hw);
  auto out = std::make_shared<Tensor>(Tensor::scalar(static_cast<float>(acc) * norm));
  Tape* tp = y_hat.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int iy = y_hat.id;
  auto yt = y_hat.t;
  return tp->record(std::move(out), {iy}, [iy, yt, C, H, W, hw, norm](Tape& t, int self) {
    if (!t.wants_grad(iy)) return;
    float gs = t.grad(self).data[0] * norm;
    const float* p = yt->ptr();
    float* dy = t.grad_buf(iy).ptr();
    for (int c = 0; c < C; ++c) {
      const float* pc = p + c * hw;
      float* dc = dy + c * hw;
      for (int i = 0; i + 1 < H; ++i)
        for (int j = 0; j + 1 < W; ++j) {
          float dv = pc[(i + 1) * W + j] - pc[i * W + j];
          float dh = pc[i * W + j + 1] - pc[i * W + j];
          dc[(i + 1) * W + j] += gs * 2.0f * dv;
          dc[i * W + j + 1] += gs * 2.0f * dh;
          dc[i * W + j] -= gs * 2.0f * (dv + dh);
        }
    }
  });
}

// L = MSE + alpha*(1 - SSIM) + beta*TV, on the time-aggregated output.
inline Val net_loss(const Val& y, const Val& y_hat, const LossWeights& w) {
  if (w.alpha < 0.0f || w.beta < 0.0f) throw ConfigError("net_loss: weights must be nonnegative");
  Val l = mse_loss(y, y_hat);
  l = add(l, scale(affine(ssim_value(y, y_hat), -1.0f, 1.0f), w.alpha));
  l = add(l, scale(tv_loss(y_hat), w.beta));
  ensure_finite(*l.t, "net_loss");
  return l;
}

}  // namespace snndhz
