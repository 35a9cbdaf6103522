#pragma once

#include "attention.hpp"
#include "colorspace.hpp"

namespace snndhz {

struct ModelConfig {
  float zeta = 0.5f;
  float lambda = 25.0f;
  float v_th = 0.5f;
  bool adaptive_threshold = true;
  bool rgb_only = false;
  int heads = 1;
  uint64_t seed = 1;

  NeuronConfig neuron() const { return NeuronConfig{zeta, v_th, lambda, adaptive_threshold}; }
};

// Elementwise Y = K*X - K*B + X per timestep. No clamping in the graph.
// K == 0 passes X through bit-exactly; B == X cancels the haze term exactly.
inline Val soft_reconstruct(const Val& k, const Val& b, const Val& x) {
  check_same_shape(*k.t, *b.t, "soft_reconstruct");
  check_same_shape(*k.t, *x.t, "soft_reconstruct");
  return add(sub(mul(k, x), mul(k, b)), x);
}

struct ForwardResult {
  Val y_hat;  // [3,H,W] mean over timesteps, unclamped
  Val y_seq;  // [T,3,H,W]
  Val k;      // [T,3,H,W]
  Val b;      // [T,3,H,W]
};

// Full dehazing network. Channel plan 16/32/64: spike coders emit 16 channels
// at H/2, encoder stages reach 64 at H/8 where the transformer blocks run,
// and three decoder stages return to 3 channels at full resolution.
class DehazeModel {
 public:
  static constexpr int kCoderChannels = 16;
  static constexpr int kEnc1Channels = 32;
  static constexpr int kEnc2Channels = 64;
  static constexpr int kGtransHidden = 192;
  static constexpr int kBlHidden1 = 32;
  static constexpr int kBlHidden2 = 16;
  static constexpr int kTransDepth = 2;

  DehazeModel(const DehazeModel&) = delete;
  DehazeModel& operator=(const DehazeModel&) = delete;

  explicit DehazeModel(const ModelConfig& cfg) : cfg_(cfg) {
    Rng rng(cfg.seed);
    NeuronConfig nc = cfg.neuron();
    rgb_coder_ = SpikeCoder::make(params_, rng, "coder.rgb", kCoderChannels, nc);
    if (!cfg.rgb_only) lab_coder_ = SpikeCoder::make(params_, rng, "coder.lab", kCoderChannels, nc);

    int bl_in = cfg.rgb_only ? kCoderChannels : 2 * kCoderChannels;
    bl_c1_ = Conv2dLayer::make(params_, rng, "bl.c1", bl_in, kBlHidden1, 3, 1, 1, true);
    bl_a1_ = AlifNeuron::make(params_, "bl.a1", nc);
    bl_c2_ = Conv2dLayer::make(params_, rng, "bl.c2", kBlHidden1, kBlHidden2, 3, 1, 1, true);
    bl_a2_ = AlifNeuron::make(params_, "bl.a2", nc);
    bl_deconv_ = ConvT2dLayer::make(params_, rng, "bl.deconv", kBlHidden2, 3, 4, 2, 1, true);

    rgb_e1_ = EncoderStage::make(params_, rng, "k_est.rgb.e1", kCoderChannels, kEnc1Channels, nc);
    rgb_e2_ = EncoderStage::make(params_, rng, "k_est.rgb.e2", kEnc1Channels, kEnc2Channels, nc);
    for (int i = 0; i < kTransDepth; ++i)
      rgb_blocks_.push_back(TransformerBlock::make(params_, rng,
                                                   "k_est.rgb.block" + std::to_string(i + 1),
                                                   kEnc2Channels, kGtransHidden, cfg.heads, nc));
    if (!cfg.rgb_only) {
      lab_e1_ = EncoderStage::make(params_, rng, "k_est.lab.e1", kCoderChannels, kEnc1Channels, nc);
      lab_e2_ = EncoderStage::make(params_, rng, "k_est.lab.e2", kEnc1Channels, kEnc2Channels, nc);
      for (int i = 0; i < kTransDepth; ++i)
        lab_blocks_.push_back(TransformerBlock::make(params_, rng,
                                                     "k_est.lab.block" + std::to_string(i + 1),
                                                     kEnc2Channels, kGtransHidden, cfg.heads, nc));
    }

    int branches = cfg.rgb_only ? 1 : 2;
    d1_ = DecoderStage::make(params_, rng, "k_est.dec.d1", branches * kEnc2Channels, kEnc1Channels,
                             nc, false);
    d2_ = DecoderStage::make(params_, rng, "k_est.dec.d2", (1 + branches) * kEnc1Channels,
                             kCoderChannels, nc, false);
    d3_ = DecoderStage::make(params_, rng, "k_est.dec.d3", (1 + branches) * kCoderChannels, 3, nc,
                             true);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  long param_count() const { return params_.count(); }

  // conv(->32) + ALIF + conv(->16) + ALIF + deconv(->3, x2) + membrane readout.
  // Input: spike train at H/2 (both coder branches channel-concatenated).
  Val background_light(Ctx& ctx, const Val& x_bl) const {
    Val y = bl_c1_.forward(ctx, x_bl);
    y = alif_apply(ctx, const_cast<AlifNeuron&>(bl_a1_), y, "bl.a1");
    y = bl_c2_.forward(ctx, y);
    y = alif_apply(ctx, const_cast<AlifNeuron&>(bl_a2_), y, "bl.a2");
    y = bl_deconv_.forward(ctx, y);
    return readout_apply(y, cfg_.zeta);
  }

  // Dual encoder/transformer branches feeding a shared decoder with skip
  // concats from each branch's intermediate spike trains.
  Val k_estimator(Ctx& ctx, const Val& s_rgb, const Val& s_lab) const {
    Val r1 = rgb_e1_.forward(ctx, s_rgb);
    Val r2 = rgb_e2_.forward(ctx, r1);
    Val tr = r2;
    for (const TransformerBlock& b : rgb_blocks_) tr = b.forward(ctx, tr);

    Val din, s2in, s3in;
    if (cfg_.rgb_only) {
      din = tr;
      Val dec1 = d1_.forward(ctx, din);
      Val dec2 = d2_.forward(ctx, concat({dec1, r1}, 1));
      return d3_.forward(ctx, concat({dec2, s_rgb}, 1));
    }
    Val l1 = lab_e1_.forward(ctx, s_lab);
    Val l2 = lab_e2_.forward(ctx, l1);
    Val tl = l2;
    for (const TransformerBlock& b : lab_blocks_) tl = b.forward(ctx, tl);
    Val dec1 = d1_.forward(ctx, concat({tr, tl}, 1));
    Val dec2 = d2_.forward(ctx, concat({dec1, r1, l1}, 1));
    return d3_.forward(ctx, concat({dec2, s_rgb, s_lab}, 1));
  }

  // image [3,H,W] in [0,1], H and W divisible by 8. Replicates T frames,
  // runs both branches, estimates K and B, and soft-reconstructs per step.
  ForwardResult forward(Ctx& ctx, const Tensor& image, int T) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw ShapeError("forward: expected [3,H,W] image, got " + shape_str(image.shape));
    int H = image.dim(1), W = image.dim(2);
    if (H % 8 != 0 || W % 8 != 0)
      throw ShapeError("forward: input dims must be divisible by 8, got " + std::to_string(H) +
                       "x" + std::to_string(W));
    if (T < 1) throw ShapeError("forward: T must be >= 1");
    for (float v : image.data)
      if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("forward: pixel values must lie in [0,1]");

    Tensor rgb_seq = Tensor::zeros({T, 3, H, W});
    long fn = image.numel();
    for (int t = 0; t < T; ++t)
      std::copy(image.data.begin(), image.data.end(), rgb_seq.data.begin() + t * fn);

    Val x_seq = ctx.constant(rgb_seq);
    Val s_rgb = rgb_coder_.forward(ctx, x_seq);
    Val s_lab, bl_in;
    if (cfg_.rgb_only) {
      bl_in = s_rgb;
    } else {
      Val lab_seq = ctx.constant(rgb_to_lab_sequence(rgb_seq));
      s_lab = lab_coder_.forward(ctx, lab_seq);
      bl_in = concat({s_rgb, s_lab}, 1);
    }

    Val b = background_light(ctx, bl_in);
    Val k = k_estimator(ctx, s_rgb, s_lab);
    Val y_seq = soft_reconstruct(k, b, x_seq);
    Val y_hat = mean_axis0(y_seq);
    return ForwardResult{y_hat, y_seq, k, b};
  }

  // Access for structural assertions in tests.
  const DecoderStage& decoder1() const { return d1_; }
  const SpikeCoder& rgb_coder() const { return rgb_coder_; }

 private:
  ModelConfig cfg_;
  ParamStore params_;
  SpikeCoder rgb_coder_, lab_coder_;
  Conv2dLayer bl_c1_, bl_c2_;
  AlifNeuron bl_a1_, bl_a2_;
  ConvT2dLayer bl_deconv_;
  EncoderStage rgb_e1_, rgb_e2_, lab_e1_, lab_e2_;
  std::vector<TransformerBlock> rgb_blocks_, lab_blocks_;
  DecoderStage d1_, d2_, d3_;
};

}  // namespace snndhz
