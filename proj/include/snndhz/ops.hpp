#pragma once

#include <memory>

#include "tape.hpp"
#include "tensor.hpp"

namespace snndhz {

inline Val make_constant(Tape* tp, Tensor t) {
  if (tp) return tp->constant(std::move(t));
  return Val{std::make_shared<Tensor>(std::move(t)), nullptr, -1};
}

inline void ensure_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + ": non-finite value");
}

inline Val add(const Val& a, const Val& b) {
  check_same_shape(*a.t, *b.t, "add");
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  const float* pb = b.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pa[i] + pb[i];
  Tape* tp = common_tape({&a, &b});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), ib = node_id(*tp, b);
  return tp->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.wants_grad(ia)) accumulate(t.grad_buf(ia), g.ptr());
    if (t.wants_grad(ib)) accumulate(t.grad_buf(ib), g.ptr());
  });
}

inline Val sub(const Val& a, const Val& b) {
  check_same_shape(*a.t, *b.t, "sub");
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  const float* pb = b.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pa[i] - pb[i];
  Tape* tp = common_tape({&a, &b});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), ib = node_id(*tp, b);
  return tp->record(std::move(out), {ia, ib}, [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.wants_grad(ia)) accumulate(t.grad_buf(ia), g.ptr());
    if (t.wants_grad(ib)) {
      Tensor& gb = t.grad_buf(ib);
      const float* gs = g.ptr();
      float* p = gb.ptr();
      for (long i = 0; i < gb.numel(); ++i) p[i] -= gs[i];
    }
  });
}

inline Val mul(const Val& a, const Val& b) {
  check_same_shape(*a.t, *b.t, "mul");
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  const float* pb = b.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pa[i] * pb[i];
  Tape* tp = common_tape({&a, &b});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), ib = node_id(*tp, b);
  auto ta = a.t, tb = b.t;
  return tp->record(std::move(out), {ia, ib}, [ia, ib, ta, tb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const float* gs = g.ptr();
    if (t.wants_grad(ia)) {
      float* p = t.grad_buf(ia).ptr();
      const float* ob = tb->ptr();
      for (long i = 0; i < g.numel(); ++i) p[i] += gs[i] * ob[i];
    }
    if (t.wants_grad(ib)) {
      float* p = t.grad_buf(ib).ptr();
      const float* oa = ta->ptr();
      for (long i = 0; i < g.numel(); ++i) p[i] += gs[i] * oa[i];
    }
  });
}

inline Val div(const Val& a, const Val& b) {
  check_same_shape(*a.t, *b.t, "div");
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  const float* pb = b.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pa[i] / pb[i];
  Tape* tp = common_tape({&a, &b});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), ib = node_id(*tp, b);
  auto ta = a.t, tb = b.t;
  return tp->record(std::move(out), {ia, ib}, [ia, ib, ta, tb](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const float* gs = g.ptr();
    const float* oa = ta->ptr();
    const float* ob = tb->ptr();
    if (t.wants_grad(ia)) {
      float* p = t.grad_buf(ia).ptr();
      for (long i = 0; i < g.numel(); ++i) p[i] += gs[i] / ob[i];
    }
    if (t.wants_grad(ib)) {
      float* p = t.grad_buf(ib).ptr();
      for (long i = 0; i < g.numel(); ++i) p[i] -= gs[i] * oa[i] / (ob[i] * ob[i]);
    }
  });
}

// k*a + c elementwise.
inline Val affine(const Val& a, float k, float c) {
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = k * pa[i] + c;
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ia)) return;
    float* p = t.grad_buf(ia).ptr();
    const float* gs = g.ptr();
    for (long i = 0; i < g.numel(); ++i) p[i] += k * gs[i];
  });
}

inline Val scale(const Val& a, float k) { return affine(a, k, 0.0f); }

// a * s where s holds a single element (the learnable-threshold product).
inline Val mul_scalar(const Val& a, const Val& s) {
  if (s.numel() != 1) throw ShapeError("mul_scalar: scalar operand must have one element");
  float sv = s.t->data[0];
  auto out = std::make_shared<Tensor>(Tensor::zeros(a.shape()));
  const float* pa = a.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pa[i] * sv;
  Tape* tp = common_tape({&a, &s});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), is = node_id(*tp, s);
  auto ta = a.t;
  return tp->record(std::move(out), {ia, is}, [ia, is, sv, ta](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const float* gs = g.ptr();
    if (t.wants_grad(ia)) {
      float* p = t.grad_buf(ia).ptr();
      for (long i = 0; i < g.numel(); ++i) p[i] += gs[i] * sv;
    }
    if (t.wants_grad(is)) {
      const float* oa = ta->ptr();
      double acc = 0.0;
      for (long i = 0; i < g.numel(); ++i) acc += static_cast<double>(gs[i]) * oa[i];
      t.grad_buf(is).data[0] += static_cast<float>(acc);
    }
  });
}

inline Val sum_all(const Val& a) {
  auto out = std::make_shared<Tensor>(Tensor::scalar(static_cast<float>(sum_double(a.t->ptr(), a.numel()))));
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    float g = t.grad(self).data[0];
    if (!t.wants_grad(ia)) return;
    Tensor& gb = t.grad_buf(ia);
    float* p = gb.ptr();
    for (long i = 0; i < gb.numel(); ++i) p[i] += g;
  });
}

inline Val mean_all(const Val& a) {
  long n = a.numel();
  auto out = std::make_shared<Tensor>(
      Tensor::scalar(static_cast<float>(sum_double(a.t->ptr(), n) / static_cast<double>(n))));
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, n](Tape& t, int self) {
    float g = t.grad(self).data[0] / static_cast<float>(n);
    if (!t.wants_grad(ia)) return;
    Tensor& gb = t.grad_buf(ia);
    float* p = gb.ptr();
    for (long i = 0; i < gb.numel(); ++i) p[i] += g;
  });
}

// [T, rest...] -> [rest...], mean over the leading axis.
inline Val mean_axis0(const Val& a) {
  if (a.t->rank() < 2) throw ShapeError("mean_axis0: rank must be >= 2");
  int T = a.t->dim(0);
  Shape rest(a.t->shape.begin() + 1, a.t->shape.end());
  long inner = shape_numel(rest);
  auto out = std::make_shared<Tensor>(Tensor::zeros(rest));
  const float* pa = a.t->ptr();
  float* po = out->ptr();
  float inv = 1.0f / static_cast<float>(T);
  for (int t = 0; t < T; ++t)
    for (long i = 0; i < inner; ++i) po[i] += pa[static_cast<long>(t) * inner + i];
  for (long i = 0; i < inner; ++i) po[i] *= inv;
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, T, inner, inv](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ia)) return;
    float* p = t.grad_buf(ia).ptr();
    const float* gs = g.ptr();
    for (int k = 0; k < T; ++k)
      for (long i = 0; i < inner; ++i) p[static_cast<long>(k) * inner + i] += gs[i] * inv;
  });
}

// [rest...] -> [T, rest...] by copying the frame T times.
inline Val repeat_axis0(const Val& a, int T) {
  if (T < 1) throw ShapeError("repeat_axis0: T must be >= 1");
  Shape s = a.t->shape;
  s.insert(s.begin(), T);
  auto out = std::make_shared<Tensor>(Tensor::zeros(s));
  long inner = a.numel();
  for (int t = 0; t < T; ++t)
    std::memcpy(out->ptr() + static_cast<long>(t) * inner, a.t->ptr(), sizeof(float) * static_cast<size_t>(inner));
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, T, inner](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ia)) return;
    float* p = t.grad_buf(ia).ptr();
    const float* gs = g.ptr();
    for (int k = 0; k < T; ++k)
      for (long i = 0; i < inner; ++i) p[i] += gs[static_cast<long>(k) * inner + i];
  });
}

inline Val reshape(const Val& a, Shape s) {
  if (shape_numel(s) != a.numel())
    throw ShapeError("reshape: element count mismatch " + shape_str(a.t->shape) + " -> " + shape_str(s));
  auto out = std::make_shared<Tensor>(s, a.t->data);
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (t.wants_grad(ia)) accumulate(t.grad_buf(ia), g.ptr());
  });
}

namespace detail {
inline void transpose_last2_raw(const float* src, float* dst, long batch, int m, int n) {
  for (long b = 0; b < batch; ++b) {
    const float* s = src + b * m * n;
    float* d = dst + b * m * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) d[static_cast<long>(j) * m + i] = s[static_cast<long>(i) * n + j];
  }
}
}  // namespace detail

inline Val transpose_last2(const Val& a) {
  if (a.t->rank() < 2) throw ShapeError("transpose_last2: rank must be >= 2");
  Shape s = a.t->shape;
  int m = s[s.size() - 2], n = s[s.size() - 1];
  std::swap(s[s.size() - 2], s[s.size() - 1]);
  long batch = a.numel() / (static_cast<long>(m) * n);
  auto out = std::make_shared<Tensor>(Tensor::zeros(s));
  detail::transpose_last2_raw(a.t->ptr(), out->ptr(), batch, m, n);
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, batch, m, n](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ia)) return;
    Tensor tr = Tensor::zeros(t.grad_buf(ia).shape);
    detail::transpose_last2_raw(g.ptr(), tr.ptr(), batch, n, m);
    accumulate(t.grad_buf(ia), tr.ptr());
  });
}

inline Val narrow(const Val& a, int axis, int start, int len) {
  const Shape& s = a.t->shape;
  if (axis < 0 || axis >= a.t->rank()) throw ShapeError("narrow: bad axis");
  if (start < 0 || len < 1 || start + len > s[static_cast<size_t>(axis)])
    throw ShapeError("narrow: slice out of range");
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
  for (int i = axis + 1; i < a.t->rank(); ++i) inner *= s[static_cast<size_t>(i)];
  int d = s[static_cast<size_t>(axis)];
  Shape os = s;
  os[static_cast<size_t>(axis)] = len;
  auto out = std::make_shared<Tensor>(Tensor::zeros(os));
  for (long o = 0; o < outer; ++o)
    std::memcpy(out->ptr() + o * len * inner, a.t->ptr() + (o * d + start) * inner,
                sizeof(float) * static_cast<size_t>(len) * inner);
  Tape* tp = a.tape;
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = a.id;
  return tp->record(std::move(out), {ia}, [ia, outer, inner, d, start, len](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    if (!t.wants_grad(ia)) return;
    float* p = t.grad_buf(ia).ptr();
    const float* gs = g.ptr();
    for (long o = 0; o < outer; ++o) {
      float* dst = p + (o * d + start) * inner;
      const float* src = gs + o * len * inner;
      for (long i = 0; i < static_cast<long>(len) * inner; ++i) dst[i] += src[i];
    }
  });
}

inline Val concat(const std::vector<Val>& vs, int axis) {
  if (vs.empty()) throw ShapeError("concat: no operands");
  const Shape& s0 = vs[0].t->shape;
  int rank = vs[0].t->rank();
  if (axis < 0 || axis >= rank) throw ShapeError("concat: bad axis");
  int total = 0;
  for (const Val& v : vs) {
    if (v.t->rank() != rank) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != axis && v.t->shape[static_cast<size_t>(i)] != s0[static_cast<size_t>(i)])
        throw ShapeError("concat: shape mismatch off the concat axis");
    total += v.t->dim(axis);
  }
  Shape os = s0;
  os[static_cast<size_t>(axis)] = total;
  long outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s0[static_cast<size_t>(i)];
  auto out = std::make_shared<Tensor>(Tensor::zeros(os));
  long off = 0;
  for (const Val& v : vs) {
    int d = v.t->dim(axis);
    for (long o = 0; o < outer; ++o)
      std::memcpy(out->ptr() + (o * total + off) * inner, v.t->ptr() + o * d * inner,
                  sizeof(float) * static_cast<size_t>(d) * inner);
    off += d;
  }
  std::vector<const Val*> refs;
  for (const Val& v : vs) refs.push_back(&v);
  Tape* tp = nullptr;
  for (const Val* v : refs)
    if (v->tape) {
      if (tp && tp != v->tape) throw NumericError("concat: operands on different tapes");
      tp = v->tape;
    }
  if (!tp) return Val{std::move(out), nullptr, -1};
  std::vector<int> ids;
  std::vector<int> dims;
  for (const Val& v : vs) {
    ids.push_back(node_id(*tp, v));
    dims.push_back(v.t->dim(axis));
  }
  return tp->record(std::move(out), ids, [ids, dims, outer, inner, total](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const float* gs = g.ptr();
    long off2 = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      int d = dims[k];
      if (t.wants_grad(ids[k])) {
        float* p = t.grad_buf(ids[k]).ptr();
        for (long o = 0; o < outer; ++o) {
          const float* src = gs + (o * total + off2) * inner;
          float* dst = p + o * d * inner;
          for (long i = 0; i < static_cast<long>(d) * inner; ++i) dst[i] += src[i];
        }
      }
      off2 += d;
    }
  });
}

// Batched matmul over rank-3 operands: out[b] = op(a[b]) * op(bm[b]).
inline Val bmm(const Val& a, const Val& b, bool trans_a = false, bool trans_b = false) {
  if (a.t->rank() != 3 || b.t->rank() != 3) throw ShapeError("bmm: operands must be rank 3");
  int B = a.t->dim(0);
  if (b.t->dim(0) != B) throw ShapeError("bmm: batch mismatch");
  int M = trans_a ? a.t->dim(2) : a.t->dim(1);
  int K = trans_a ? a.t->dim(1) : a.t->dim(2);
  int Kb = trans_b ? b.t->dim(2) : b.t->dim(1);
  int N = trans_b ? b.t->dim(1) : b.t->dim(2);
  if (K != Kb)
    throw ShapeError("bmm: inner dimension mismatch " + shape_str(a.t->shape) + " vs " +
                     shape_str(b.t->shape));
  auto out = std::make_shared<Tensor>(Tensor::zeros({B, M, N}));
  long sa = static_cast<long>(a.t->dim(1)) * a.t->dim(2);
  long sb = static_cast<long>(b.t->dim(1)) * b.t->dim(2);
  long so = static_cast<long>(M) * N;
  for (int i = 0; i < B; ++i)
    mm(a.t->ptr() + i * sa, b.t->ptr() + i * sb, out->ptr() + i * so, M, K, N, trans_a, trans_b,
       false);
  Tape* tp = common_tape({&a, &b});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int ia = node_id(*tp, a), ib = node_id(*tp, b);
  auto ta = a.t, tb = b.t;
  return tp->record(
      std::move(out), {ia, ib},
      [ia, ib, ta, tb, B, M, K, N, sa, sb, so, trans_a, trans_b](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        if (t.wants_grad(ia)) {
          float* da = t.grad_buf(ia).ptr();
          for (int i = 0; i < B; ++i) {
            const float* gp = g.ptr() + i * so;
            const float* bp = tb->ptr() + i * sb;
            float* dst = da + i * sa;
            if (!trans_a && !trans_b) mm(gp, bp, dst, M, N, K, false, true, true);
            else if (!trans_a && trans_b) mm(gp, bp, dst, M, N, K, false, false, true);
            else if (trans_a && !trans_b) mm(bp, gp, dst, K, N, M, false, true, true);
            else mm(bp, gp, dst, K, N, M, true, true, true);
          }
        }
        if (t.wants_grad(ib)) {
          float* db = t.grad_buf(ib).ptr();
          for (int i = 0; i < B; ++i) {
            const float* gp = g.ptr() + i * so;
            const float* ap = ta->ptr() + i * sa;
            float* dst = db + i * sb;
            if (!trans_a && !trans_b) mm(ap, gp, dst, K, M, N, true, false, true);
            else if (!trans_a && trans_b) mm(gp, ap, dst, N, M, K, true, false, true);
            else if (trans_a && !trans_b) mm(ap, gp, dst, K, M, N, false, false, true);
            else mm(gp, ap, dst, N, M, K, true, true, true);
          }
        }
      });
}

}  // namespace snndhz
