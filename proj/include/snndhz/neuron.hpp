#pragma once

#include "context.hpp"
#include "ops.hpp"

namespace snndhz {

struct NeuronConfig {
  float zeta = 0.5f;     // membrane decay
  float v_th = 0.5f;     // threshold init (or fixed value when not adaptive)
  float lambda = 25.0f;  // surrogate slope
  bool adaptive = true;  // threshold is learnable
};

// Fast-sigmoid surrogate derivative of the Heaviside spike w.r.t. membrane.
inline float surrogate_grad(float v, float v_th, float lambda) {
  float x = 1.0f + lambda * std::fabs(v - v_th);
  return 1.0f / (x * x);
}

// Heaviside: 1 where v >= v_th. Exact 0/1 forward; surrogate backward with
// dS/dv = sg and dS/dv_th = -sg. v_th is a one-element Val.
inline Val spike(const Val& v, const Val& v_th, float lambda) {
  if (v_th.numel() != 1) throw ShapeError("spike: threshold must be a single element");
  float th = v_th.t->data[0];
  auto out = std::make_shared<Tensor>(Tensor::zeros(v.shape()));
  const float* pv = v.t->ptr();
  float* po = out->ptr();
  for (long i = 0; i < out->numel(); ++i) po[i] = pv[i] >= th ? 1.0f : 0.0f;
  Tape* tp = common_tape({&v, &v_th});
  if (!tp) return Val{std::move(out), nullptr, -1};
  int iv = node_id(*tp, v), ith = node_id(*tp, v_th);
  auto vt = v.t;
  return tp->record(std::move(out), {iv, ith}, [iv, ith, vt, th, lambda](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const float* gs = g.ptr();
    const float* pv = vt->ptr();
    bool wv = t.wants_grad(iv), wth = t.wants_grad(ith);
    float* dv = wv ? t.grad_buf(iv).ptr() : nullptr;
    double dth = 0.0;
    for (long i = 0; i < g.numel(); ++i) {
      if (gs[i] == 0.0f) continue;
      float sg = surrogate_grad(pv[i], th, lambda);
      if (wv) dv[i] += gs[i] * sg;
      if (wth) dth -= static_cast<double>(gs[i]) * sg;
    }
    if (wth) t.grad_buf(ith).data[0] += static_cast<float>(dth);
  });
}

// Rolling state of a spiking layer. Empty Vals mean the zero initial state.
struct LifState {
  Val v;
  Val s;
};

struct LifStepResult {
  Val spikes;
  LifState state;
};

// One ALIF update: V[t] = zeta*V[t-1] + input - S[t-1]*v_th, S[t] = H(V[t] - v_th).
// The reset term uses detached spikes so gradients flow only through the
// current step's surrogate, not the previous step's firing decision.
inline LifStepResult lif_step(const LifState& prev, const Val& input, const Val& v_th,
                              const NeuronConfig& cfg) {
  Val v;
  if (prev.v.t) {
    v = add(scale(prev.v, cfg.zeta), input);
    v = sub(v, mul_scalar(detach(prev.s), v_th));
  } else {
    v = input;  // zero initial membrane and no prior spikes
  }
  ensure_finite(*v.t, "lif membrane");
  Val s = spike(v, v_th, cfg.lambda);
  return {s, {v, s}};
}

struct ReadoutState {
  Val v;
};

// Non-spiking accumulator: V[t] = zeta*V[t-1] + input. No threshold, no reset;
// gradients are exact.
inline std::pair<Val, ReadoutState> membrane_readout_step(const ReadoutState& prev,
                                                          const Val& input, float zeta) {
  Val v = prev.v.t ? add(scale(prev.v, zeta), input) : input;
  ensure_finite(*v.t, "readout membrane");
  return {v, ReadoutState{v}};
}

// A spiking activation with one registered (possibly learnable) threshold.
struct AlifNeuron {
  NeuronConfig cfg;
  Param* v_th = nullptr;

  static AlifNeuron make(ParamStore& ps, const std::string& name, const NeuronConfig& cfg) {
    AlifNeuron n;
    n.cfg = cfg;
    n.v_th = &ps.add(name + ".v_th", Tensor::scalar(cfg.v_th));
    n.v_th->frozen = !cfg.adaptive;
    return n;
  }
};

// Applies an ALIF neuron over a [T, ...] sequence with fresh zero state.
// Output has the same shape and is binary.
inline Val alif_apply(Ctx& ctx, AlifNeuron& n, const Val& x, const std::string& trace_name) {
  if (x.t->rank() < 2) throw ShapeError("alif_apply: input must be [T, ...]");
  int T = x.t->dim(0);
  Val v_th = ctx.param(*n.v_th);
  LifState st;
  std::vector<Val> steps;
  steps.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    LifStepResult r = lif_step(st, narrow(x, 0, t, 1), v_th, n.cfg);
    st = r.state;
    steps.push_back(r.spikes);
  }
  Val out = T == 1 ? steps[0] : concat(steps, 0);
  if (ctx.trace) ctx.trace->add_spike_layer(trace_name, out.t, T);
  return out;
}

// Applies the membrane readout over a [T, ...] sequence; returns the
// real-valued membrane sequence.
inline Val readout_apply(const Val& x, float zeta) {
  if (x.t->rank() < 2) throw ShapeError("readout_apply: input must be [T, ...]");
  int T = x.t->dim(0);
  ReadoutState st;
  std::vector<Val> steps;
  steps.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto [v, next] = membrane_readout_step(st, narrow(x, 0, t, 1), zeta);
    st = next;
    steps.push_back(v);
  }
  return T == 1 ? steps[0] : concat(steps, 0);
}

}  // namespace snndhz
