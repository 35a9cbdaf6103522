#pragma once

#include <optional>

#include "conv.hpp"
#include "neuron.hpp"

namespace snndhz {

enum class LayerKind { conv, deconv, dwconv, pool, bn };

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int c_in = 0;
  int c_out = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  std::optional<NeuronConfig> neuron;
};

// Multiply count for one presentation of a weighted layer:
// c_in * c_out * k^2 * out_h * out_w, with output dims from shape arithmetic.
// Depthwise layers count one input channel per output channel.
inline double layer_flops(const LayerSpec& s, int in_h, int in_w) {
  int oh, ow;
  switch (s.kind) {
    case LayerKind::conv:
      oh = conv_out_dim(in_h, s.kernel, s.stride, s.padding);
      ow = conv_out_dim(in_w, s.kernel, s.stride, s.padding);
      return static_cast<double>(s.c_in) * s.c_out * s.kernel * s.kernel * oh * ow;
    case LayerKind::deconv:
      oh = conv_transpose_out_dim(in_h, s.kernel, s.stride, s.padding);
      ow = conv_transpose_out_dim(in_w, s.kernel, s.stride, s.padding);
      return static_cast<double>(s.c_in) * s.c_out * s.kernel * s.kernel * oh * ow;
    case LayerKind::dwconv:
      oh = conv_out_dim(in_h, s.kernel, s.stride, s.padding);
      ow = conv_out_dim(in_w, s.kernel, s.stride, s.padding);
      return static_cast<double>(s.c_out) * s.kernel * s.kernel * oh * ow;
    default:
      throw ConfigError("layer_flops: layer has no weighted operation");
  }
}

namespace detail {
inline Tensor kaiming_uniform(Rng& rng, Shape shape, long fan_in) {
  float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  return rng.uniform_tensor(std::move(shape), -bound, bound);
}
}  // namespace detail

struct Conv2dLayer {
  std::string name;
  LayerSpec spec;
  Param* w = nullptr;
  Param* b = nullptr;

  static Conv2dLayer make(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout,
                          int k, int stride, int pad, bool bias) {
    Conv2dLayer l;
    l.name = name;
    l.spec = LayerSpec{LayerKind::conv, cin, cout, k, stride, pad, std::nullopt};
    l.w = &ps.add(name + ".w",
                  detail::kaiming_uniform(rng, {cout, cin, k, k}, static_cast<long>(cin) * k * k));
    if (bias) l.b = &ps.add(name + ".b", Tensor::zeros({cout}));
    return l;
  }

  Val forward(Ctx& ctx, const Val& x, bool direct_coded = false) const {
    if (ctx.trace)
      ctx.trace->add_weight_op(name, "conv", layer_flops(spec, x.t->dim(2), x.t->dim(3)),
                               x.tensor(), x.t->dim(0), direct_coded);
    Val wv = ctx.param(*w);
    if (b) {
      Val bv = ctx.param(*b);
      return conv2d(x, wv, &bv, spec.stride, spec.padding);
    }
    return conv2d(x, wv, nullptr, spec.stride, spec.padding);
  }
};

struct ConvT2dLayer {
  std::string name;
  LayerSpec spec;
  Param* w = nullptr;
  Param* b = nullptr;

  static ConvT2dLayer make(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout,
                           int k, int stride, int pad, bool bias) {
    ConvT2dLayer l;
    l.name = name;
    l.spec = LayerSpec{LayerKind::deconv, cin, cout, k, stride, pad, std::nullopt};
    l.w = &ps.add(name + ".w",
                  detail::kaiming_uniform(rng, {cin, cout, k, k}, static_cast<long>(cin) * k * k));
    if (bias) l.b = &ps.add(name + ".b", Tensor::zeros({cout}));
    return l;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    if (ctx.trace)
      ctx.trace->add_weight_op(name, "deconv", layer_flops(spec, x.t->dim(2), x.t->dim(3)),
                               x.tensor(), x.t->dim(0), false);
    Val wv = ctx.param(*w);
    if (b) {
      Val bv = ctx.param(*b);
      return conv_transpose2d(x, wv, &bv, spec.stride, spec.padding);
    }
    return conv_transpose2d(x, wv, nullptr, spec.stride, spec.padding);
  }
};

struct DwConv2dLayer {
  std::string name;
  LayerSpec spec;
  Param* w = nullptr;
  Param* b = nullptr;

  static DwConv2dLayer make(ParamStore& ps, Rng& rng, const std::string& name, int c, int k,
                            int pad, bool bias) {
    DwConv2dLayer l;
    l.name = name;
    l.spec = LayerSpec{LayerKind::dwconv, c, c, k, 1, pad, std::nullopt};
    l.w = &ps.add(name + ".w", detail::kaiming_uniform(rng, {c, k, k}, static_cast<long>(k) * k));
    if (bias) l.b = &ps.add(name + ".b", Tensor::zeros({c}));
    return l;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    if (ctx.trace)
      ctx.trace->add_weight_op(name, "dwconv", layer_flops(spec, x.t->dim(2), x.t->dim(3)),
                               x.tensor(), x.t->dim(0), false);
    Val wv = ctx.param(*w);
    if (b) {
      Val bv = ctx.param(*b);
      return dwconv2d(x, wv, &bv, spec.padding);
    }
    return dwconv2d(x, wv, nullptr, spec.padding);
  }
};

struct BatchNorm2dLayer {
  std::string name;
  Param* gamma = nullptr;
  Param* beta = nullptr;
  Buffer* running_mean = nullptr;
  Buffer* running_var = nullptr;
  float momentum = 0.1f;
  float eps = 1e-5f;

  static BatchNorm2dLayer make(ParamStore& ps, const std::string& name, int c) {
    BatchNorm2dLayer l;
    l.name = name;
    l.gamma = &ps.add(name + ".gamma", Tensor::full({c}, 1.0f));
    l.beta = &ps.add(name + ".beta", Tensor::zeros({c}));
    l.running_mean = &ps.add_buffer(name + ".running_mean", Tensor::zeros({c}));
    l.running_var = &ps.add_buffer(name + ".running_var", Tensor::full({c}, 1.0f));
    return l;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    return batchnorm2d(x, ctx.param(*gamma), ctx.param(*beta), running_mean->value,
                       running_var->value, ctx.training, momentum, eps);
  }
};

// conv(3->C, k3, stride 2) + ALIF: real-valued frames to a binary spike train
// at half resolution. The conv is the direct-coded entry point.
struct SpikeCoder {
  Conv2dLayer conv;
  AlifNeuron alif;
  std::string name;

  static SpikeCoder make(ParamStore& ps, Rng& rng, const std::string& name, int cout,
                         const NeuronConfig& nc) {
    SpikeCoder c;
    c.name = name;
    c.conv = Conv2dLayer::make(ps, rng, name + ".conv", 3, cout, 3, 2, 1, true);
    c.alif = AlifNeuron::make(ps, name + ".alif", nc);
    return c;
  }

  Val forward(Ctx& ctx, const Val& seq) const {
    if (seq.t->rank() != 4 || seq.t->dim(1) != 3)
      throw ShapeError("spike coder: expected [T,3,H,W], got " + shape_str(seq.t->shape));
    Val z = conv.forward(ctx, seq, /*direct_coded=*/true);
    return alif_apply(ctx, const_cast<AlifNeuron&>(alif), z, name + ".alif");
  }
};

// conv(k3, pad 1) + ALIF + maxpool2: halves spatial dims, keeps binarity.
struct EncoderStage {
  Conv2dLayer conv;
  AlifNeuron alif;
  std::string name;

  static EncoderStage make(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout,
                           const NeuronConfig& nc) {
    EncoderStage e;
    e.name = name;
    e.conv = Conv2dLayer::make(ps, rng, name + ".conv", cin, cout, 3, 1, 1, true);
    e.alif = AlifNeuron::make(ps, name + ".alif", nc);
    return e;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    Val z = conv.forward(ctx, x);
    Val s = alif_apply(ctx, const_cast<AlifNeuron&>(alif), z, name + ".alif");
    return maxpool2d(s);
  }
};

// deconv(k4, stride 2, pad 1) + ALIF (interior) or membrane readout (final).
// The deconv geometry doubles spatial dims exactly.
struct DecoderStage {
  ConvT2dLayer deconv;
  AlifNeuron alif;  // unused when final
  bool final_stage = false;
  float readout_zeta = 0.5f;
  std::string name;

  static DecoderStage make(ParamStore& ps, Rng& rng, const std::string& name, int cin, int cout,
                           const NeuronConfig& nc, bool final_stage) {
    DecoderStage d;
    d.name = name;
    d.final_stage = final_stage;
    d.readout_zeta = nc.zeta;
    d.deconv = ConvT2dLayer::make(ps, rng, name + ".deconv", cin, cout, 4, 2, 1, true);
    if (!final_stage) d.alif = AlifNeuron::make(ps, name + ".alif", nc);
    return d;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    int h = x.t->dim(2);
    Val z = deconv.forward(ctx, x);
    if (z.t->dim(2) != 2 * h)
      throw ShapeError("decoder stage: deconv must exactly double spatial dims");
    if (final_stage) return readout_apply(z, readout_zeta);
    return alif_apply(ctx, const_cast<AlifNeuron&>(alif), z, name + ".alif");
  }
};

// Grouped feed-forward: 1x1 conv -> BN -> depthwise 3x3 -> 1x1 conv -> BN.
// Expands to a hidden width between the 1x1 convs; those carry no bias (BN
// follows them) and the block preserves the outer channel count.
struct GroupTrans {
  Conv2dLayer c1;
  BatchNorm2dLayer bn1;
  DwConv2dLayer dw;
  Conv2dLayer c2;
  BatchNorm2dLayer bn2;

  static GroupTrans make(ParamStore& ps, Rng& rng, const std::string& name, int c, int hidden) {
    GroupTrans g;
    g.c1 = Conv2dLayer::make(ps, rng, name + ".c1", c, hidden, 1, 1, 0, false);
    g.bn1 = BatchNorm2dLayer::make(ps, name + ".bn1", hidden);
    g.dw = DwConv2dLayer::make(ps, rng, name + ".dw", hidden, 3, 1, true);
    g.c2 = Conv2dLayer::make(ps, rng, name + ".c2", hidden, c, 1, 1, 0, false);
    g.bn2 = BatchNorm2dLayer::make(ps, name + ".bn2", c);
    return g;
  }

  Val forward(Ctx& ctx, const Val& x) const {
    Val y = bn1.forward(ctx, c1.forward(ctx, x));
    y = dw.forward(ctx, y);
    return bn2.forward(ctx, c2.forward(ctx, y));
  }
};

}  // namespace snndhz
