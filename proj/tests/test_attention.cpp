#include <catch2/catch_amalgamated.hpp>

#include "support/fd.hpp"

using namespace snndhz;
using fdtest::wrap;

namespace {

const NeuronConfig kNc{0.5f, 0.5f, 25.0f, true};

Tensor random_binary(Rng& rng, Shape shape, float p) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (float& v : t.data) v = rng.uniform(0, 1) < p ? 1.0f : 0.0f;
  return t;
}

}  // namespace

TEST_CASE("token and grid views invert each other bit-exactly") {
  Rng rng(401);
  Tensor x = rng.uniform_tensor({2, 5, 3, 4}, -1, 1);
  Val tokens = grid_to_tokens(wrap(x));
  REQUIRE(tokens.shape() == Shape{2, 12, 5});
  Val back = tokens_to_grid(tokens, 3, 4);
  REQUIRE(back.shape() == x.shape);
  for (long i = 0; i < x.numel(); ++i) REQUIRE(back.t->data[i] == x.data[i]);
  REQUIRE_THROWS_AS(tokens_to_grid(tokens, 2, 4), ShapeError);
}

TEST_CASE("attention on a single token reproduces the hand-worked product") {
  // Q=[1,1], K=[1,0], V=[0,1]: K^T V = [[0,1],[0,0]], Q(K^T V) = [0,1].
  ParamStore ps;
  AlifNeuron alif = AlifNeuron::make(ps, "a", kNc);
  Ctx ctx;
  Val q = wrap(Tensor({1, 1, 2}, {1, 1}));
  Val k = wrap(Tensor({1, 1, 2}, {1, 0}));
  Val v = wrap(Tensor({1, 1, 2}, {0, 1}));
  Val pre = bmm(q, bmm(k, v, true, false));
  REQUIRE(pre.t->data[0] == 0.0f);
  REQUIRE(pre.t->data[1] == 1.0f);
  Val out = asbsa(ctx, alif, q, k, v, 1, "a");
  REQUIRE(out.t->data[0] == 0.0f);
  REQUIRE(out.t->data[1] == 1.0f);
}

TEST_CASE("zero queries silence the attention output") {
  ParamStore ps;
  AlifNeuron alif = AlifNeuron::make(ps, "a", kNc);
  Ctx ctx;
  Rng rng(409);
  Val q = wrap(Tensor::zeros({2, 6, 4}));
  Val k = wrap(random_binary(rng, {2, 6, 4}, 0.5f));
  Val v = wrap(random_binary(rng, {2, 6, 4}, 0.5f));
  Val out = asbsa(ctx, alif, q, k, v, 1, "a");
  for (float s : out.t->data) REQUIRE(s == 0.0f);
}

TEST_CASE("binary operands make the pre-activation integer-valued") {
  Rng rng(419);
  Val q = wrap(random_binary(rng, {3, 8, 6}, 0.4f));
  Val k = wrap(random_binary(rng, {3, 8, 6}, 0.4f));
  Val v = wrap(random_binary(rng, {3, 8, 6}, 0.4f));
  Val pre = bmm(q, bmm(k, v, true, false));
  for (float x : pre.t->data) {
    REQUIRE(x >= 0.0f);
    REQUIRE(x == std::floor(x));
  }
}

TEST_CASE("single-step attention output is the thresholded pre-activation") {
  ParamStore ps;
  AlifNeuron alif = AlifNeuron::make(ps, "a", kNc);
  Ctx ctx;
  Rng rng(421);
  Val q = wrap(random_binary(rng, {1, 10, 8}, 0.4f));
  Val k = wrap(random_binary(rng, {1, 10, 8}, 0.4f));
  Val v = wrap(random_binary(rng, {1, 10, 8}, 0.4f));
  Val pre = bmm(q, bmm(k, v, true, false));
  Val out = asbsa(ctx, alif, q, k, v, 1, "a");
  for (long i = 0; i < out.numel(); ++i)
    REQUIRE(out.t->data[i] == (pre.t->data[i] >= 0.5f ? 1.0f : 0.0f));
}

TEST_CASE("attention is equivariant to permuting query tokens") {
  ParamStore ps;
  AlifNeuron a1 = AlifNeuron::make(ps, "a1", kNc);
  AlifNeuron a2 = AlifNeuron::make(ps, "a2", kNc);
  Ctx ctx;
  Rng rng(431);
  int N = 6, D = 4;
  Tensor q = random_binary(rng, {1, N, D}, 0.5f);
  Tensor k = random_binary(rng, {1, N, D}, 0.5f);
  Tensor v = random_binary(rng, {1, N, D}, 0.5f);
  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Tensor qp = Tensor::zeros({1, N, D});
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) qp.data[i * D + d] = q.data[perm[i] * D + d];
  Val out = asbsa(ctx, a1, wrap(q), wrap(k), wrap(v), 1, "a1");
  Val outp = asbsa(ctx, a2, wrap(qp), wrap(k), wrap(v), 1, "a2");
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d)
      REQUIRE(outp.t->data[i * D + d] == out.t->data[perm[i] * D + d]);
}

TEST_CASE("attention is invariant to jointly permuting key and value tokens") {
  ParamStore ps;
  AlifNeuron a1 = AlifNeuron::make(ps, "a1", kNc);
  AlifNeuron a2 = AlifNeuron::make(ps, "a2", kNc);
  Ctx ctx;
  Rng rng(433);
  int N = 6, D = 4;
  Tensor q = random_binary(rng, {1, N, D}, 0.5f);
  Tensor k = random_binary(rng, {1, N, D}, 0.5f);
  Tensor v = random_binary(rng, {1, N, D}, 0.5f);
  std::vector<int> perm = {5, 2, 0, 4, 1, 3};
  Tensor kp = Tensor::zeros({1, N, D}), vp = Tensor::zeros({1, N, D});
  for (int i = 0; i < N; ++i)
    for (int d = 0; d < D; ++d) {
      kp.data[i * D + d] = k.data[perm[i] * D + d];
      vp.data[i * D + d] = v.data[perm[i] * D + d];
    }
  Val out = asbsa(ctx, a1, wrap(q), wrap(k), wrap(v), 1, "a1");
  Val outp = asbsa(ctx, a2, wrap(q), wrap(kp), wrap(vp), 1, "a2");
  for (long i = 0; i < out.numel(); ++i) REQUIRE(outp.t->data[i] == out.t->data[i]);
}

TEST_CASE("multi-head attention equals per-head slices computed separately") {
  ParamStore ps;
  AlifNeuron a2h = AlifNeuron::make(ps, "a2h", kNc);
  Ctx ctx;
  Rng rng(439);
  int N = 5, D = 8, heads = 2, dh = 4;
  Val q = wrap(random_binary(rng, {2, N, D}, 0.4f));
  Val k = wrap(random_binary(rng, {2, N, D}, 0.4f));
  Val v = wrap(random_binary(rng, {2, N, D}, 0.4f));
  Val out = asbsa(ctx, a2h, q, k, v, heads, "a2h");
  std::vector<Val> pres;
  for (int h = 0; h < heads; ++h) {
    Val qh = narrow(q, 2, h * dh, dh), kh = narrow(k, 2, h * dh, dh),
        vh = narrow(v, 2, h * dh, dh);
    pres.push_back(bmm(qh, bmm(kh, vh, true, false)));
  }
  Val pre = concat(pres, 2);
  // Replay the two-step membrane by hand: V[1] = pre[0], V[2] = 0.5 V[1]' + pre[1].
  const float* p = pre.t->data.data();
  long n = static_cast<long>(N) * D;
  for (long i = 0; i < n; ++i) {
    float v1 = p[i];
    float s1 = v1 >= 0.5f ? 1.0f : 0.0f;
    float v2 = 0.5f * v1 + p[n + i] - s1 * 0.5f;
    float s2 = v2 >= 0.5f ? 1.0f : 0.0f;
    REQUIRE(out.t->data[i] == s1);
    REQUIRE(out.t->data[n + i] == s2);
  }
}

TEST_CASE("attention traces carry matmul flops for both products") {
  ParamStore ps;
  AlifNeuron alif = AlifNeuron::make(ps, "a", kNc);
  TraceCollector tc;
  Ctx ctx;
  ctx.trace = &tc;
  Rng rng(443);
  int N = 9, D = 8, heads = 2;
  Val q = wrap(random_binary(rng, {3, N, D}, 0.4f));
  Val k = wrap(random_binary(rng, {3, N, D}, 0.4f));
  Val v = wrap(random_binary(rng, {3, N, D}, 0.4f));
  asbsa(ctx, alif, q, k, v, heads, "blk.attn");
  REQUIRE(tc.weight_ops.size() == 2);
  REQUIRE(tc.weight_ops[0].name == "blk.attn.kv");
  REQUIRE(tc.weight_ops[1].name == "blk.attn.qw");
  double want = static_cast<double>(heads) * N * (D / heads) * (D / heads);
  REQUIRE(tc.weight_ops[0].flops == want);
  REQUIRE(tc.weight_ops[1].flops == want);
  REQUIRE(tc.spike_layers.size() == 1);
}

TEST_CASE("head count must divide the channel width") {
  ParamStore ps;
  AlifNeuron alif = AlifNeuron::make(ps, "a", kNc);
  Ctx ctx;
  Val q = wrap(Tensor::zeros({1, 2, 6}));
  REQUIRE_THROWS_AS(asbsa(ctx, alif, q, q, q, 4, "a"), ShapeError);
  REQUIRE_THROWS_AS(asbsa(ctx, alif, q, q, q, 0, "a"), ShapeError);
}

TEST_CASE("qkv pipelines emit binary tokens that differ per projection") {
  ParamStore ps;
  Rng rng(449);
  TransformerBlock blk = TransformerBlock::make(ps, rng, "blk", 16, 48, 1, kNc);
  Ctx ctx;
  Rng data(457);
  Tensor x0 = random_binary(data, {3, 16, 4, 4}, 0.5f);
  QkvResult qkv = blk.make_qkv(ctx, wrap(x0));
  REQUIRE(qkv.q.shape() == Shape{3, 16, 16});
  for (const Val* t : {&qkv.q, &qkv.k, &qkv.v})
    for (float s : t->t->data) REQUIRE((s == 0.0f || s == 1.0f));
  bool qk_differ = false, qv_differ = false;
  for (long i = 0; i < qkv.q.numel(); ++i) {
    qk_differ |= qkv.q.t->data[i] != qkv.k.t->data[i];
    qv_differ |= qkv.q.t->data[i] != qkv.v.t->data[i];
  }
  REQUIRE(qk_differ);
  REQUIRE(qv_differ);
}

TEST_CASE("transformer block preserves shape and stays finite when stacked") {
  ParamStore ps;
  Rng rng(461);
  TransformerBlock b1 = TransformerBlock::make(ps, rng, "b1", 16, 48, 1, kNc);
  TransformerBlock b2 = TransformerBlock::make(ps, rng, "b2", 16, 48, 1, kNc);
  Ctx ctx;
  Rng data(463);
  Tensor x0 = random_binary(data, {2, 16, 4, 4}, 0.5f);
  Val y = b2.forward(ctx, b1.forward(ctx, wrap(x0)));
  REQUIRE(y.shape() == x0.shape);
  for (float v : y.t->data) REQUIRE(std::isfinite(v));
}

TEST_CASE("transformer block maps zero input to zero output at init") {
  ParamStore ps;
  Rng rng(467);
  TransformerBlock blk = TransformerBlock::make(ps, rng, "blk", 16, 48, 1, kNc);
  Ctx ctx;
  Val y = blk.forward(ctx, wrap(Tensor::zeros({3, 16, 4, 4})));
  for (float v : y.t->data) REQUIRE(v == 0.0f);
}

TEST_CASE("transformer block at width 64 carries 112264 parameters") {
  ParamStore ps;
  Rng rng(479);
  TransformerBlock::make(ps, rng, "blk", 64, 192, 1, kNc);
  REQUIRE(ps.count("blk.") == 112264);
}
