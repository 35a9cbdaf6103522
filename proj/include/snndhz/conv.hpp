#pragma once

#include <memory>

#include "ops.hpp"

namespace snndhz {

inline int conv_out_dim(int in, int k, int stride, int pad) {
  int out = (in + 2 * pad - k) / stride + 1;
  if (out < 1)
    throw ShapeError("conv: output dimension collapses (in=" + std::to_string(in) +
                     ", k=" + std::to_string(k) + ", stride=" + std::to_string(stride) +
                     ", pad=" + std::to_string(pad) + ")");
  return out;
}

inline int conv_transpose_out_dim(int in, int k, int stride, int pad) {
  int out = (in - 1) * stride - 2 * pad + k;
  if (out < 1) throw ShapeError("conv_transpose: output dimension collapses");
  return out;
}

namespace detail {

// x [C,H,W] -> col [C*k*k, oh*ow]
inline void im2col(const float* x, float* col, int C, int H, int W, int k, int stride, int pad,
                   int oh, int ow) {
  for (int c = 0; c < C; ++c) {
    const float* xc = x + static_cast<long>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* row = col + (static_cast<long>(c) * k * k + ki * k + kj) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) {
            std::memset(row + static_cast<long>(oy) * ow, 0, sizeof(float) * static_cast<size_t>(ow));
            continue;
          }
          const float* xr = xc + static_cast<long>(iy) * W;
          float* dst = row + static_cast<long>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kj - pad;
            dst[ox] = (ix >= 0 && ix < W) ? xr[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// col [C*k*k, oh*ow] accumulated back into x [C,H,W]
inline void col2im(const float* col, float* x, int C, int H, int W, int k, int stride, int pad,
                   int oh, int ow) {
  for (int c = 0; c < C; ++c) {
    float* xc = x + static_cast<long>(c) * H * W;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* row = col + (static_cast<long>(c) * k * k + ki * k + kj) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= H) continue;
          float* xr = xc + static_cast<long>(iy) * W;
          const float* src = row + static_cast<long>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < W) xr[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x [N,Cin,H,W], kernel [Cout,Cin,k,k], bias [Cout] or empty Val.
inline Val conv2d(const Val& x, const Val& kernel, const Val* bias, int stride, int pad) {
  if (x.t->rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W]");
  if (kernel.t->rank() != 4) throw ShapeError("conv2d: kernel must be [Cout,Cin,k,k]");
  int N = x.t->dim(0), Cin = x.t->dim(1), H = x.t->dim(2), W = x.t->dim(3);
  int Cout = kernel.t->dim(0), k = kernel.t->dim(2);
  if (kernel.t->dim(1) != Cin)
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.t->dim(1)) +
                     " input channels, got " + std::to_string(Cin));
  if (kernel.t->dim(3) != k) throw ShapeError("conv2d: kernel must be square");
  if (bias && bias->numel() != Cout) throw ShapeError("conv2d: bias size mismatch");
  int oh = conv_out_dim(H, k, stride, pad), ow = conv_out_dim(W, k, stride, pad);
  long ckk = static_cast<long>(Cin) * k * k, P = static_cast<long>(oh) * ow;

  auto out = std::make_shared<Tensor>(Tensor::zeros({N, Cout, oh, ow}));
  std::vector<float> col(static_cast<size_t>(ckk * P));
  for (int n = 0; n < N; ++n) {
    detail::im2col(x.t->ptr() + static_cast<long>(n) * Cin * H * W, col.data(), Cin, H, W, k,
                   stride, pad, oh, ow);
    mm(kernel.t->ptr(), col.data(), out->ptr() + static_cast<long>(n) * Cout * P,
       Cout, static_cast<int>(ckk), static_cast<int>(P), false, false, false);
  }
  if (bias) {
    const float* b = bias->t->ptr();
    float* po = out->ptr();
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < Cout; ++c) {
        float bv = b[c];
        float* dst = po + (static_cast<long>(n) * Cout + c) * P;
        for (long i = 0; i < P; ++i) dst[i] += bv;
      }
  }

  Tape* tp = bias ? common_tape({&x, &kernel, bias}) : common_tape({&x, &kernel});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ix = node_id(*tp, x), ik = node_id(*tp, kernel);
  int ib = bias ? node_id(*tp, *bias) : -1;
  std::vector<int> parents = {ix, ik};
  if (bias) parents.push_back(ib);
  auto xt = x.t;
  auto kt = kernel.t;
  return tp->record(
      std::move(out), std::move(parents),
      [ix, ik, ib, xt, kt, N, Cin, H, W, Cout, k, stride, pad, oh, ow, ckk, P](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        std::vector<float> col(static_cast<size_t>(ckk * P));
        std::vector<float> tmp;
        bool wx = t.wants_grad(ix), wk = t.wants_grad(ik);
        if (wx) tmp.resize(static_cast<size_t>(ckk * P));
        for (int n = 0; n < N; ++n) {
          const float* gn = g.ptr() + static_cast<long>(n) * Cout * P;
          if (wx || wk)
            detail::im2col(xt->ptr() + static_cast<long>(n) * Cin * H * W, col.data(), Cin, H, W,
                           k, stride, pad, oh, ow);
          if (wk)
            mm(gn, col.data(), t.grad_buf(ik).ptr(), Cout, static_cast<int>(P),
               static_cast<int>(ckk), false, true, true);
          if (wx) {
            mm(kt->ptr(), gn, tmp.data(), static_cast<int>(ckk), Cout, static_cast<int>(P), true,
               false, false);
            detail::col2im(tmp.data(), t.grad_buf(ix).ptr() + static_cast<long>(n) * Cin * H * W,
                           Cin, H, W, k, stride, pad, oh, ow);
          }
        }
        if (ib >= 0 && t.wants_grad(ib)) {
          float* db = t.grad_buf(ib).ptr();
          for (int c = 0; c < Cout; ++c) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n)
              acc += sum_double(g.ptr() + (static_cast<long>(n) * Cout + c) * P, P);
            db[c] += static_cast<float>(acc);
          }
        }
      });
}

// y [N,A,h,w], kernel [A,B,k,k] (same layout as the conv2d it is adjoint to).
// Output [N,B,(h-1)s-2p+k, ...]. <conv2d(x,k), y> == <x, conv_transpose2d(y,k)>.
inline Val conv_transpose2d(const Val& y, const Val& kernel, const Val* bias, int stride,
                            int pad) {
  if (y.t->rank() != 4) throw ShapeError("conv_transpose2d: input must be [N,A,h,w]");
  if (kernel.t->rank() != 4) throw ShapeError("conv_transpose2d: kernel must be [A,B,k,k]");
  int N = y.t->dim(0), A = y.t->dim(1), h = y.t->dim(2), w = y.t->dim(3);
  int B = kernel.t->dim(1), k = kernel.t->dim(2);
  if (kernel.t->dim(0) != A)
    throw ShapeError("conv_transpose2d: kernel expects " + std::to_string(kernel.t->dim(0)) +
                     " input channels, got " + std::to_string(A));
  if (bias && bias->numel() != B) throw ShapeError("conv_transpose2d: bias size mismatch");
  int H = conv_transpose_out_dim(h, k, stride, pad);
  int W = conv_transpose_out_dim(w, k, stride, pad);
  long bkk = static_cast<long>(B) * k * k, P = static_cast<long>(h) * w;

  auto out = std::make_shared<Tensor>(Tensor::zeros({N, B, H, W}));
  std::vector<float> col(static_cast<size_t>(bkk * P));
  for (int n = 0; n < N; ++n) {
    mm(kernel.t->ptr(), y.t->ptr() + static_cast<long>(n) * A * P, col.data(),
       static_cast<int>(bkk), A, static_cast<int>(P), true, false, false);
    detail::col2im(col.data(), out->ptr() + static_cast<long>(n) * B * H * W, B, H, W, k, stride,
                   pad, h, w);
  }
  if (bias) {
    const float* b = bias->t->ptr();
    float* po = out->ptr();
    long hw = static_cast<long>(H) * W;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < B; ++c) {
        float bv = b[c];
        float* dst = po + (static_cast<long>(n) * B + c) * hw;
        for (long i = 0; i < hw; ++i) dst[i] += bv;
      }
  }

  Tape* tp = bias ? common_tape({&y, &kernel, bias}) : common_tape({&y, &kernel});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int iy = node_id(*tp, y), ik = node_id(*tp, kernel);
  int ib = bias ? node_id(*tp, *bias) : -1;
  std::vector<int> parents = {iy, ik};
  if (bias) parents.push_back(ib);
  auto yt = y.t;
  auto kt = kernel.t;
  return tp->record(
      std::move(out), std::move(parents),
      [iy, ik, ib, yt, kt, N, A, h, w, B, k, stride, pad, H, W, bkk, P](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        std::vector<float> col(static_cast<size_t>(bkk * P));
        bool wy = t.wants_grad(iy), wk = t.wants_grad(ik);
        long hw = static_cast<long>(H) * W;
        for (int n = 0; n < N; ++n) {
          const float* gn = g.ptr() + static_cast<long>(n) * B * hw;
          if (wy || wk) detail::im2col(gn, col.data(), B, H, W, k, stride, pad, h, w);
          if (wy)
            mm(kt->ptr(), col.data(), t.grad_buf(iy).ptr() + static_cast<long>(n) * A * P, A,
               static_cast<int>(bkk), static_cast<int>(P), false, false, true);
          if (wk)
            mm(yt->ptr() + static_cast<long>(n) * A * P, col.data(), t.grad_buf(ik).ptr(), A,
               static_cast<int>(P), static_cast<int>(bkk), false, true, true);
        }
        if (ib >= 0 && t.wants_grad(ib)) {
          float* db = t.grad_buf(ib).ptr();
          for (int c = 0; c < B; ++c) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n)
              acc += sum_double(g.ptr() + (static_cast<long>(n) * B + c) * hw, hw);
            db[c] += static_cast<float>(acc);
          }
        }
      });
}

// Depthwise conv, stride 1. x [N,C,H,W], kernel [C,k,k], bias [C] or null.
inline Val dwconv2d(const Val& x, const Val& kernel, const Val* bias, int pad) {
  if (x.t->rank() != 4) throw ShapeError("dwconv2d: input must be [N,C,H,W]");
  if (kernel.t->rank() != 3) throw ShapeError("dwconv2d: kernel must be [C,k,k]");
  int N = x.t->dim(0), C = x.t->dim(1), H = x.t->dim(2), W = x.t->dim(3);
  int k = kernel.t->dim(1);
  if (kernel.t->dim(0) != C) throw ShapeError("dwconv2d: channel mismatch");
  if (bias && bias->numel() != C) throw ShapeError("dwconv2d: bias size mismatch");
  int oh = conv_out_dim(H, k, 1, pad), ow = conv_out_dim(W, k, 1, pad);

  auto out = std::make_shared<Tensor>(Tensor::zeros({N, C, oh, ow}));
  const float* px = x.t->ptr();
  const float* pk = kernel.t->ptr();
  float* po = out->ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* xc = px + (static_cast<long>(n) * C + c) * H * W;
      const float* kc = pk + static_cast<long>(c) * k * k;
      float* oc = po + (static_cast<long>(n) * C + c) * oh * ow;
      float bv = bias ? bias->t->data[static_cast<size_t>(c)] : 0.0f;
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float acc = bv;
          for (int ki = 0; ki < k; ++ki) {
            int iy = oy + ki - pad;
            if (iy < 0 || iy >= H) continue;
            for (int kj = 0; kj < k; ++kj) {
              int ix = ox + kj - pad;
              if (ix >= 0 && ix < W) acc += xc[static_cast<long>(iy) * W + ix] * kc[ki * k + kj];
            }
          }
          oc[static_cast<long>(oy) * ow + ox] = acc;
        }
    }

  Tape* tp = bias ? common_tape({&x, &kernel, bias}) : common_tape({&x, &kernel});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ix = node_id(*tp, x), ik = node_id(*tp, kernel);
  int ib = bias ? node_id(*tp, *bias) : -1;
  std::vector<int> parents = {ix, ik};
  if (bias) parents.push_back(ib);
  auto xt = x.t;
  auto kt = kernel.t;
  return tp->record(
      std::move(out), std::move(parents),
      [ix, ik, ib, xt, kt, N, C, H, W, k, pad, oh, ow](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        bool wx = t.wants_grad(ix), wk = t.wants_grad(ik);
        const float* px = xt->ptr();
        const float* pk = kt->ptr();
        for (int n = 0; n < N; ++n)
          for (int c = 0; c < C; ++c) {
            const float* gc = g.ptr() + (static_cast<long>(n) * C + c) * oh * ow;
            const float* xc = px + (static_cast<long>(n) * C + c) * H * W;
            const float* kc = pk + static_cast<long>(c) * k * k;
            float* dxc = wx ? t.grad_buf(ix).ptr() + (static_cast<long>(n) * C + c) * H * W : nullptr;
            float* dkc = wk ? t.grad_buf(ik).ptr() + static_cast<long>(c) * k * k : nullptr;
            for (int oy = 0; oy < oh; ++oy)
              for (int ox = 0; ox < ow; ++ox) {
                float gv = gc[static_cast<long>(oy) * ow + ox];
                if (gv == 0.0f) continue;
                for (int ki = 0; ki < k; ++ki) {
                  int iy = oy + ki - pad;
                  if (iy < 0 || iy >= H) continue;
                  for (int kj = 0; kj < k; ++kj) {
                    int ix2 = ox + kj - pad;
                    if (ix2 < 0 || ix2 >= W) continue;
                    if (dxc) dxc[static_cast<long>(iy) * W + ix2] += gv * kc[ki * k + kj];
                    if (dkc) dkc[ki * k + kj] += gv * xc[static_cast<long>(iy) * W + ix2];
                  }
                }
              }
          }
        if (ib >= 0 && t.wants_grad(ib)) {
          float* db = t.grad_buf(ib).ptr();
          long p = static_cast<long>(oh) * ow;
          for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n)
              acc += sum_double(g.ptr() + (static_cast<long>(n) * C + c) * p, p);
            db[c] += static_cast<float>(acc);
          }
        }
      });
}

// 2x2 window, stride 2. Ties keep the first index in scan order.
inline Val maxpool2d(const Val& x) {
  if (x.t->rank() != 4) throw ShapeError("maxpool2d: input must be [N,C,H,W]");
  int N = x.t->dim(0), C = x.t->dim(1), H = x.t->dim(2), W = x.t->dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("maxpool2d: spatial dims must be even, got " + std::to_string(H) + "x" +
                     std::to_string(W));
  int oh = H / 2, ow = W / 2;
  auto out = std::make_shared<Tensor>(Tensor::zeros({N, C, oh, ow}));
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(out->numel()));
  const float* px = x.t->ptr();
  float* po = out->ptr();
  long oi = 0;
  for (long nc = 0; nc < static_cast<long>(N) * C; ++nc) {
    const float* xc = px + nc * H * W;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox, ++oi) {
        int base = (oy * 2) * W + ox * 2;
        int best = base;
        float bv = xc[base];
        const int cand[3] = {base + 1, base + W, base + W + 1};
        for (int idx : cand)
          if (xc[idx] > bv) {
            bv = xc[idx];
            best = idx;
          }
        po[oi] = bv;
        (*argmax)[static_cast<size_t>(oi)] = static_cast<int>(nc * H * W) + best;
      }
  }
  Tape* tp = x.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ix = x.id;
  return tp->record(std::move(out), {ix}, [ix, argmax](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ix)) return;
    float* p = t.grad_buf(ix).ptr();
    const float* gs = g.ptr();
    for (long i = 0; i < g.numel(); ++i) p[(*argmax)[static_cast<size_t>(i)]] += gs[i];
  });
}

// Per-channel batch normalization over [N,C,H,W] with N*H*W as the batch.
// Training mode uses batch statistics and updates the running buffers in
// place (momentum 0.1, unbiased running variance); eval mode reads them.
inline Val batchnorm2d(const Val& x, const Val& gamma, const Val& beta, Tensor& running_mean,
                       Tensor& running_var, bool training, float momentum = 0.1f,
                       float eps = 1e-5f) {
  if (x.t->rank() != 4) throw ShapeError("batchnorm2d: input must be [N,C,H,W]");
  int N = x.t->dim(0), C = x.t->dim(1), H = x.t->dim(2), W = x.t->dim(3);
  if (gamma.numel() != C || beta.numel() != C) throw ShapeError("batchnorm2d: affine size mismatch");
  if (running_mean.numel() != C || running_var.numel() != C)
    throw ShapeError("batchnorm2d: running stat size mismatch");
  long M = static_cast<long>(N) * H * W;
  long hw = static_cast<long>(H) * W;

  std::vector<float> mean(static_cast<size_t>(C)), istd(static_cast<size_t>(C));
  const float* px = x.t->ptr();
  if (training) {
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (int n = 0; n < N; ++n) s += sum_double(px + (static_cast<long>(n) * C + c) * hw, hw);
      double mu = s / static_cast<double>(M);
      double v = 0.0;
      for (int n = 0; n < N; ++n) {
        const float* xc = px + (static_cast<long>(n) * C + c) * hw;
        for (long i = 0; i < hw; ++i) {
          double d = xc[i] - mu;
          v += d * d;
        }
      }
      v /= static_cast<double>(M);
      mean[static_cast<size_t>(c)] = static_cast<float>(mu);
      istd[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(v + eps));
      double unbiased = M > 1 ? v * static_cast<double>(M) / static_cast<double>(M - 1) : v;
      running_mean.data[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_mean.data[static_cast<size_t>(c)] + momentum * static_cast<float>(mu);
      running_var.data[static_cast<size_t>(c)] =
          (1.0f - momentum) * running_var.data[static_cast<size_t>(c)] + momentum * static_cast<float>(unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[static_cast<size_t>(c)] = running_mean.data[static_cast<size_t>(c)];
      istd[static_cast<size_t>(c)] =
          1.0f / std::sqrt(running_var.data[static_cast<size_t>(c)] + eps);
    }
  }

  auto out = std::make_shared<Tensor>(Tensor::zeros(x.t->shape));
  const float* pg = gamma.t->ptr();
  const float* pb = beta.t->ptr();
  float* po = out->ptr();
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* xc = px + (static_cast<long>(n) * C + c) * hw;
      float* oc = po + (static_cast<long>(n) * C + c) * hw;
      float mu = mean[static_cast<size_t>(c)], is = istd[static_cast<size_t>(c)];
      float gm = pg[c], bt = pb[c];
      for (long i = 0; i < hw; ++i) oc[i] = (xc[i] - mu) * is * gm + bt;
    }

  Tape* tp = common_tape({&x, &gamma, &beta});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ix = node_id(*tp, x), ig = node_id(*tp, gamma), ib = node_id(*tp, beta);
  auto xt = x.t;
  auto gt = gamma.t;
  return tp->record(
      std::move(out), {ix, ig, ib},
      [ix, ig, ib, xt, gt, N, C, hw, M, mean, istd, training](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const float* px = xt->ptr();
        const float* pg = gt->ptr();
        bool wx = t.wants_grad(ix);
        for (int c = 0; c < C; ++c) {
          float mu = mean[static_cast<size_t>(c)], is = istd[static_cast<size_t>(c)];
          double sum_g = 0.0, sum_gx = 0.0;
          for (int n = 0; n < N; ++n) {
            const float* gc = g.ptr() + (static_cast<long>(n) * C + c) * hw;
            const float* xc = px + (static_cast<long>(n) * C + c) * hw;
            for (long i = 0; i < hw; ++i) {
              sum_g += gc[i];
              sum_gx += static_cast<double>(gc[i]) * ((xc[i] - mu) * is);
            }
          }
          if (t.wants_grad(ig)) t.grad_buf(ig).data[static_cast<size_t>(c)] += static_cast<float>(sum_gx);
          if (t.wants_grad(ib)) t.grad_buf(ib).data[static_cast<size_t>(c)] += static_cast<float>(sum_g);
          if (wx) {
            float gm = pg[c];
            float* dx = t.grad_buf(ix).ptr();
            if (training) {
              float a = static_cast<float>(sum_g / static_cast<double>(M));
              float b = static_cast<float>(sum_gx / static_cast<double>(M));
              for (int n = 0; n < N; ++n) {
                const float* gc = g.ptr() + (static_cast<long>(n) * C + c) * hw;
                const float* xc = px + (static_cast<long>(n) * C + c) * hw;
                float* dxc = dx + (static_cast<long>(n) * C + c) * hw;
                for (long i = 0; i < hw; ++i) {
                  float xh = (xc[i] - mu) * is;
                  dxc[i] += gm * is * (gc[i] - a - xh * b);
                }
              }
            } else {
              for (int n = 0; n < N; ++n) {
                const float* gc = g.ptr() + (static_cast<long>(n) * C + c) * hw;
                float* dxc = dx + (static_cast<long>(n) * C + c) * hw;
                for (long i = 0; i < hw; ++i) dxc[i] += gc[i] * gm * is;
              }
            }
          }
        }
      });
}

}  // namespace snndhz
