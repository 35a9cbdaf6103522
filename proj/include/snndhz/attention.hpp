#pragma once

#include "layers.hpp"

namespace snndhz {

// [T,C,h,w] -> [T,N,C] token form, N = h*w.
inline Val grid_to_tokens(const Val& x) {
  if (x.t->rank() != 4) throw ShapeError("grid_to_tokens: expected [T,C,h,w]");
  int T = x.t->dim(0), C = x.t->dim(1), h = x.t->dim(2), w = x.t->dim(3);
  return transpose_last2(reshape(x, {T, C, h * w}));
}

// [T,N,C] -> [T,C,h,w]; h*w must equal N.
inline Val tokens_to_grid(const Val& x, int h, int w) {
  if (x.t->rank() != 3) throw ShapeError("tokens_to_grid: expected [T,N,C]");
  int T = x.t->dim(0), N = x.t->dim(1), C = x.t->dim(2);
  if (N != h * w) throw ShapeError("tokens_to_grid: token count does not match grid");
  return reshape(transpose_last2(x), {T, C, h, w});
}

// ALIF -> grouped feed-forward -> ALIF, one pipeline per projection.
struct QkvPipeline {
  AlifNeuron pre;
  GroupTrans g;
  AlifNeuron post;

  static QkvPipeline make(ParamStore& ps, Rng& rng, const std::string& name, int c, int hidden,
                          const NeuronConfig& nc) {
    QkvPipeline p;
    p.pre = AlifNeuron::make(ps, name + ".pre", nc);
    p.g = GroupTrans::make(ps, rng, name + ".g", c, hidden);
    p.post = AlifNeuron::make(ps, name + ".post", nc);
    return p;
  }

  // [T,C,h,w] -> binary tokens [T,N,C]
  Val forward(Ctx& ctx, const Val& x, const std::string& name) const {
    Val y = alif_apply(ctx, const_cast<AlifNeuron&>(pre), x, name + ".pre");
    y = g.forward(ctx, y);
    y = alif_apply(ctx, const_cast<AlifNeuron&>(post), y, name + ".post");
    return grid_to_tokens(y);
  }
};

struct QkvResult {
  Val q, k, v;
};

// Spike self-attention without scale or softmax: ALIF(Q (K^T V)) per timestep.
// Inputs binary [T,N,D]; the pre-activation is integer-valued by construction.
inline Val asbsa(Ctx& ctx, AlifNeuron& alif, const Val& q, const Val& k, const Val& v, int heads,
                 const std::string& name) {
  if (q.t->rank() != 3 || !(q.t->shape == k.t->shape) || !(q.t->shape == v.t->shape))
    throw ShapeError("asbsa: Q/K/V must share shape [T,N,D]");
  int T = q.t->dim(0), N = q.t->dim(1), D = q.t->dim(2);
  if (heads < 1 || D % heads != 0) throw ShapeError("asbsa: head count must divide D");
  int dh = D / heads;
  if (ctx.trace) {
    double flops = static_cast<double>(heads) * N * dh * dh;
    ctx.trace->add_weight_op(name + ".kv", "matmul", flops, k.tensor(), T, false);
    ctx.trace->add_weight_op(name + ".qw", "matmul", flops, q.tensor(), T, false);
  }
  std::vector<Val> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Val qh = heads == 1 ? q : narrow(q, 2, h * dh, dh);
    Val kh = heads == 1 ? k : narrow(k, 2, h * dh, dh);
    Val vh = heads == 1 ? v : narrow(v, 2, h * dh, dh);
    Val w = bmm(kh, vh, /*trans_a=*/true, /*trans_b=*/false);  // [T,dh,dh]
    outs.push_back(bmm(qh, w));                                // [T,N,dh]
  }
  Val pre = heads == 1 ? outs[0] : concat(outs, 2);
  return alif_apply(ctx, alif, pre, name + ".alif");
}

// Residual attention sub-block then residual MLP sub-block:
//   X_mlp = G^Trans(ASBSA(Q,K,V)) + X_in
//   X_out = X_mlp + BN(Conv1d_k1(ALIF(X_mlp)))
// Operates at transformer resolution [T,D,h,w]; output is real-valued.
struct TransformerBlock {
  std::string name;
  QkvPipeline qp, kp, vp;
  AlifNeuron attn_alif;
  GroupTrans post;
  AlifNeuron mlp_alif;
  Conv2dLayer mlp_conv;  // kernel-1 over tokens == 1x1 over the grid
  BatchNorm2dLayer mlp_bn;
  int heads = 1;

  static TransformerBlock make(ParamStore& ps, Rng& rng, const std::string& name, int c,
                               int hidden, int heads, const NeuronConfig& nc) {
    TransformerBlock b;
    b.name = name;
    b.heads = heads;
    b.qp = QkvPipeline::make(ps, rng, name + ".q", c, hidden, nc);
    b.kp = QkvPipeline::make(ps, rng, name + ".k", c, hidden, nc);
    b.vp = QkvPipeline::make(ps, rng, name + ".v", c, hidden, nc);
    b.attn_alif = AlifNeuron::make(ps, name + ".attn", nc);
    b.post = GroupTrans::make(ps, rng, name + ".post", c, hidden);
    b.mlp_alif = AlifNeuron::make(ps, name + ".mlp.alif", nc);
    b.mlp_conv = Conv2dLayer::make(ps, rng, name + ".mlp.conv", c, c, 1, 1, 0, false);
    b.mlp_bn = BatchNorm2dLayer::make(ps, name + ".mlp.bn", c);
    return b;
  }

  QkvResult make_qkv(Ctx& ctx, const Val& x) const {
    return QkvResult{qp.forward(ctx, x, name + ".q"), kp.forward(ctx, x, name + ".k"),
                     vp.forward(ctx, x, name + ".v")};
  }

  Val forward(Ctx& ctx, const Val& x) const {
    int h = x.t->dim(2), w = x.t->dim(3);
    QkvResult qkv = make_qkv(ctx, x);
    Val attn = asbsa(ctx, const_cast<AlifNeuron&>(attn_alif), qkv.q, qkv.k, qkv.v, heads,
                     name + ".attn");
    Val x_mlp = add(post.forward(ctx, tokens_to_grid(attn, h, w)), x);
    Val y = alif_apply(ctx, const_cast<AlifNeuron&>(mlp_alif), x_mlp, name + ".mlp.alif");
    y = mlp_bn.forward(ctx, mlp_conv.forward(ctx, y));
    return add(x_mlp, y);
  }
};

}  // namespace snndhz
