#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "support/fd.hpp"

using namespace snndhz;
using Catch::Matchers::ContainsSubstring;

namespace {

Dataset make_pairs(int n, int hw, uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.name = "s" + std::to_string(i) + ".png";
    s.hazy = rng.uniform_tensor({3, hw, hw}, 0.0f, 1.0f);
    s.ref = rng.uniform_tensor({3, hw, hw}, 0.0f, 1.0f);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.timesteps = 1;
  cfg.resolution = 8;
  cfg.validation_start_epoch = 1;
  return cfg;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<Tensor> param_values(const DehazeModel& model) {
  std::vector<Tensor> out;
  for (const Param& p : model.params().params()) out.push_back(*p.value);
  return out;
}

// memcmp, not ==: meta fields can legitimately hold NaN (no validation ran).
bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("adam's first step moves every weight by one learning rate") {
  ParamStore ps;
  Param& p = ps.add("w", Tensor({4}, {0.7f, -0.2f, 1.5f, -3.0f}));
  p.grad = Tensor({4}, {0.5f, -0.125f, 2.0f, -8.0f});
  Tensor before = *p.value;
  Adam opt;
  opt.step(ps);
  REQUIRE(opt.step_count() == 1);
  for (long i = 0; i < 4; ++i) {
    float moved = before.data[i] - p.value->data[i];
    float expect = p.grad.data[i] > 0 ? 0.001f : -0.001f;
    REQUIRE(moved == Catch::Approx(expect).margin(1e-6));
  }
}

TEST_CASE("adam with a zero learning rate changes no weight bit") {
  ParamStore ps;
  Param& p = ps.add("w", Tensor({3}, {0.25f, -1.0f, 7.0f}));
  p.grad = Tensor({3}, {1.0f, 2.0f, 3.0f});
  Tensor before = *p.value;
  AdamConfig ac;
  ac.lr = 0.0f;
  Adam opt(ac);
  opt.step(ps);
  REQUIRE(bitwise_equal(*p.value, before));
  REQUIRE(p.adam_m.numel() == 3);
  REQUIRE(p.adam_m.data[0] != 0.0f);
}

TEST_CASE("adam skips frozen parameters entirely") {
  ParamStore ps;
  Param& live = ps.add("a", Tensor::scalar(1.0f));
  Param& iced = ps.add("b", Tensor::scalar(1.0f));
  live.grad.data[0] = 1.0f;
  iced.grad.data[0] = 1.0f;
  iced.frozen = true;
  Adam opt;
  opt.step(ps);
  REQUIRE(live.value->data[0] != 1.0f);
  REQUIRE(iced.value->data[0] == 1.0f);
  REQUIRE(iced.adam_m.numel() == 0);
}

TEST_CASE("adam follows the bias-corrected recurrence across steps") {
  ParamStore ps;
  Param& p = ps.add("w", Tensor::scalar(0.7f));
  AdamConfig ac;
  Adam opt(ac);
  float w = 0.7f, m = 0.0f, v = 0.0f;
  for (int step = 1; step <= 5; ++step) {
    float g = 0.3f * static_cast<float>(step) - 0.8f;
    p.grad.data[0] = g;
    opt.step(ps);
    m = ac.beta1 * m + (1.0f - ac.beta1) * g;
    v = ac.beta2 * v + (1.0f - ac.beta2) * g * g;
    float bc1 = 1.0f - std::pow(ac.beta1, static_cast<float>(step));
    float bc2 = 1.0f - std::pow(ac.beta2, static_cast<float>(step));
    w -= ac.lr * (m / bc1) / (std::sqrt(v / bc2) + ac.eps);
    REQUIRE(p.value->data[0] == Catch::Approx(w).margin(1e-6));
  }
  REQUIRE(opt.step_count() == 5);
}

TEST_CASE("a train step applies an update with live gradient norms") {
  DehazeModel model(ModelConfig{});
  Dataset ds = make_pairs(1, 8, 11);
  Tensor before = *model.params().find("coder.rgb.conv.w")->value;
  Adam opt;
  TrainConfig cfg = tiny_config();
  StepResult sr = train_step(model, {&ds.samples[0]}, opt, cfg);
  REQUIRE(sr.applied);
  REQUIRE(std::isfinite(sr.loss));
  REQUIRE(sr.loss > 0.0f);
  REQUIRE(sr.grad_norm > 0.0);
  REQUIRE(sr.threshold_grad_norm > 0.0);
  REQUIRE(model.params().grad_norm("coder.") > 0.0);
  REQUIRE(model.params().grad_norm("bl.") > 0.0);
  REQUIRE(model.params().grad_norm("k_est.") > 0.0);
  REQUIRE_FALSE(bitwise_equal(*model.params().find("coder.rgb.conv.w")->value, before));
}

TEST_CASE("fixed thresholds receive no gradient and never move") {
  ModelConfig mc;
  mc.adaptive_threshold = false;
  DehazeModel model(mc);
  std::vector<Tensor> thresholds;
  for (const Param& p : model.params().params())
    if (p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".v_th") == 0) {
      REQUIRE(p.frozen);
      thresholds.push_back(*p.value);
    }
  REQUIRE_FALSE(thresholds.empty());
  Dataset ds = make_pairs(1, 8, 12);
  Adam opt;
  TrainConfig cfg = tiny_config();
  StepResult sr = train_step(model, {&ds.samples[0]}, opt, cfg);
  REQUIRE(sr.applied);
  REQUIRE(sr.threshold_grad_norm == 0.0);
  REQUIRE(sr.grad_norm > 0.0);
  size_t at = 0;
  for (const Param& p : model.params().params())
    if (p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".v_th") == 0)
      REQUIRE(bitwise_equal(*p.value, thresholds[at++]));
}

TEST_CASE("an empty batch is rejected") {
  DehazeModel model(ModelConfig{});
  Adam opt;
  TrainConfig cfg = tiny_config();
  REQUIRE_THROWS_AS(train_step(model, {}, opt, cfg), ConfigError);
}

TEST_CASE("train config validation rejects out-of-range settings") {
  auto broken = [](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    return cfg;
  };
  REQUIRE_NOTHROW(TrainConfig{}.validate());
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.epochs = 0; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.lr = 0.0f; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.lr = -0.5f; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.timesteps = 0; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.resolution = 13; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.resolution = 0; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.batch_size = 0; }).validate(), ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.validation_start_epoch = 0; }).validate(),
                    ConfigError);
  REQUIRE_THROWS_AS(broken([](TrainConfig& c) { c.loss.alpha = -0.1f; }).validate(), ConfigError);
}

TEST_CASE("a checkpoint file survives a write/read round trip bit-exactly") {
  ModelConfig mc;
  mc.seed = 0x0123456789abcdefull;
  DehazeModel model(mc);
  Dataset ds = make_pairs(1, 8, 13);
  Adam opt;
  TrainConfig cfg = tiny_config();
  train_step(model, {&ds.samples[0]}, opt, cfg);

  Checkpoint ck = snapshot_model(model, 3, 0.5, opt.step_count(), true);
  std::string path = temp_path("snndhz_roundtrip.ckpt");
  write_checkpoint(ck, path);
  Checkpoint rd = read_checkpoint(path);
  std::remove(path.c_str());

  REQUIRE(rd.entries.size() == ck.entries.size());
  for (size_t i = 0; i < ck.entries.size(); ++i) {
    REQUIRE(rd.entries[i].first == ck.entries[i].first);
    REQUIRE(bitwise_equal(rd.entries[i].second, ck.entries[i].second));
  }
  REQUIRE(checkpoint_epoch(rd) == 3);
  REQUIRE(checkpoint_best_val(rd) == Catch::Approx(0.5));
  REQUIRE(checkpoint_adam_step(rd) == 1);
  REQUIRE(checkpoint_model_config(rd).seed == 0x0123456789abcdefull);
}

TEST_CASE("restoring a checkpoint reproduces parameters, buffers, and moments") {
  DehazeModel model(ModelConfig{});
  Dataset ds = make_pairs(1, 8, 14);
  Adam opt;
  TrainConfig cfg = tiny_config();
  train_step(model, {&ds.samples[0]}, opt, cfg);
  Checkpoint ck = snapshot_model(model, 1, 0.25, opt.step_count(), true);

  DehazeModel fresh(ModelConfig{});
  restore_model(fresh, ck);
  auto want = model.params().params().begin();
  for (const Param& p : fresh.params().params()) {
    REQUIRE(bitwise_equal(*p.value, *want->value));
    if (!p.frozen) {
      REQUIRE(bitwise_equal(p.adam_m, want->adam_m));
      REQUIRE(bitwise_equal(p.adam_v, want->adam_v));
    }
    ++want;
  }
  auto wantb = model.params().buffers().begin();
  for (const Buffer& b : fresh.params().buffers()) {
    REQUIRE(bitwise_equal(b.value, wantb->value));
    ++wantb;
  }
}

TEST_CASE("restoring a momentless checkpoint clears stale optimizer state") {
  DehazeModel model(ModelConfig{});
  Dataset ds = make_pairs(1, 8, 15);
  Adam opt;
  TrainConfig cfg = tiny_config();
  train_step(model, {&ds.samples[0]}, opt, cfg);
  Checkpoint bare = snapshot_model(model, 1, 0.25, 0, false);
  restore_model(model, bare);
  for (const Param& p : model.params().params()) {
    REQUIRE(p.adam_m.numel() == 0);
    REQUIRE(p.adam_v.numel() == 0);
  }
}

TEST_CASE("checkpoint loading rejects malformed files and mismatched models") {
  std::string path = temp_path("snndhz_bad.ckpt");
  {
    std::ofstream f(path, std::ios::binary);
    f << "this is not a checkpoint";
  }
  REQUIRE_THROWS_WITH(read_checkpoint(path), ContainsSubstring("not a checkpoint file"));

  DehazeModel model(ModelConfig{});
  Checkpoint ck = snapshot_model(model, 1, 0.0, 0, false);
  write_checkpoint(ck, path);
  {
    std::error_code ec;
    auto full = std::filesystem::file_size(path, ec);
    std::filesystem::resize_file(path, full / 2, ec);
    REQUIRE(!ec);
  }
  REQUIRE_THROWS_WITH(read_checkpoint(path), ContainsSubstring("truncated"));
  std::remove(path.c_str());

  Checkpoint missing = ck;
  missing.entries.erase(missing.entries.begin());
  REQUIRE_THROWS_WITH(restore_model(model, missing),
                      ContainsSubstring("checkpoint missing tensor: " + ck.entries[0].first));

  Checkpoint bent = ck;
  bent.entries[0].second = Tensor::zeros({2, 2});
  REQUIRE_THROWS_WITH(restore_model(model, bent),
                      ContainsSubstring("checkpoint shape mismatch for " + ck.entries[0].first));

  Checkpoint extra = ck;
  extra.put("bogus.w", Tensor::scalar(1.0f));
  REQUIRE_THROWS_WITH(restore_model(model, extra),
                      ContainsSubstring("checkpoint has unknown tensor: bogus.w"));
}

TEST_CASE("fit logs every epoch and gates validation by start epoch") {
  DehazeModel model(ModelConfig{});
  Dataset train = make_pairs(2, 8, 16);
  Dataset val = make_pairs(1, 8, 17);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  cfg.validation_start_epoch = 2;
  Adam opt;
  std::vector<int> seen;
  FitResult fr = fit(model, train, val, cfg, opt, 0,
                     [&](const EpochLog& log) { seen.push_back(log.epoch); });
  REQUIRE(fr.log.size() == 3);
  REQUIRE(seen == std::vector<int>{1, 2, 3});
  REQUIRE_FALSE(fr.log[0].has_val);
  REQUIRE(fr.log[1].has_val);
  REQUIRE(fr.log[2].has_val);
  for (const EpochLog& log : fr.log) {
    REQUIRE(log.steps == 2);
    REQUIRE(log.skipped_steps == 0);
    REQUIRE(std::isfinite(log.train_loss));
  }
  double best = std::min(fr.log[1].val_loss, fr.log[2].val_loss);
  REQUIRE(fr.best_val_loss == best);
  REQUIRE(fr.best_epoch == (fr.log[1].val_loss <= fr.log[2].val_loss ? 2 : 3));
  REQUIRE(checkpoint_epoch(fr.best) == fr.best_epoch);
  REQUIRE(checkpoint_epoch(fr.last) == 3);
}

TEST_CASE("fit without any validation epoch falls back to the final snapshot") {
  DehazeModel model(ModelConfig{});
  Dataset train = make_pairs(1, 8, 18);
  Dataset val = make_pairs(1, 8, 19);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  cfg.validation_start_epoch = 5;
  Adam opt;
  FitResult fr = fit(model, train, val, cfg, opt);
  REQUIRE(fr.log.size() == 1);
  REQUIRE_FALSE(fr.log[0].has_val);
  REQUIRE(fr.best_epoch == 1);
  REQUIRE(fr.best.entries.size() == fr.last.entries.size());
  for (size_t i = 0; i < fr.best.entries.size(); ++i)
    REQUIRE(bitwise_equal(fr.best.entries[i].second, fr.last.entries[i].second));
}

TEST_CASE("fit resumed from a start epoch continues the numbering") {
  DehazeModel model(ModelConfig{});
  Dataset train = make_pairs(1, 8, 20);
  Dataset val = make_pairs(1, 8, 21);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 3;
  Adam opt;
  FitResult fr = fit(model, train, val, cfg, opt, 1);
  REQUIRE(fr.log.size() == 2);
  REQUIRE(fr.log[0].epoch == 2);
  REQUIRE(fr.log[1].epoch == 3);
}

TEST_CASE("two identically seeded fits produce bit-identical models") {
  Dataset train = make_pairs(2, 8, 22);
  Dataset val = make_pairs(1, 8, 23);
  TrainConfig cfg = tiny_config();
  cfg.epochs = 2;

  ModelConfig mc;
  mc.seed = 77;
  DehazeModel a(mc);
  DehazeModel b(mc);
  Adam oa, ob;
  FitResult fa = fit(a, train, val, cfg, oa);
  FitResult fb = fit(b, train, val, cfg, ob);

  std::vector<Tensor> va = param_values(a);
  std::vector<Tensor> vb = param_values(b);
  REQUIRE(va.size() == vb.size());
  for (size_t i = 0; i < va.size(); ++i) REQUIRE(bitwise_equal(va[i], vb[i]));
  for (size_t i = 0; i < fa.log.size(); ++i) {
    REQUIRE(fa.log[i].train_loss == fb.log[i].train_loss);
    REQUIRE(fa.log[i].val_loss == fb.log[i].val_loss);
  }
}

TEST_CASE("fit rejects empty datasets and out-of-range resume points") {
  DehazeModel model(ModelConfig{});
  Dataset train = make_pairs(1, 8, 24);
  Dataset val = make_pairs(1, 8, 25);
  TrainConfig cfg = tiny_config();
  Adam opt;
  REQUIRE_THROWS_AS(fit(model, Dataset{}, val, cfg, opt), ConfigError);
  REQUIRE_THROWS_AS(fit(model, train, Dataset{}, cfg, opt), ConfigError);
  REQUIRE_THROWS_AS(fit(model, train, val, cfg, opt, -1), ConfigError);
  REQUIRE_THROWS_AS(fit(model, train, val, cfg, opt, cfg.epochs + 1), ConfigError);
}

TEST_CASE("fifty steps on one pair drive the loss downward") {
  ModelConfig mc;
  mc.seed = 5;
  DehazeModel model(mc);
  Dataset ds = make_pairs(1, 16, 26);
  Adam opt;
  opt.config().lr = 0.002f;
  TrainConfig cfg = tiny_config();
  cfg.timesteps = 2;
  cfg.resolution = 16;
  std::vector<float> losses;
  for (int i = 0; i < 50; ++i) {
    StepResult sr = train_step(model, {&ds.samples[0]}, opt, cfg);
    REQUIRE(sr.applied);
    losses.push_back(sr.loss);
  }
  auto mean = [&](int lo, int hi) {
    double s = 0.0;
    for (int i = lo; i < hi; ++i) s += losses[static_cast<size_t>(i)];
    return s / (hi - lo);
  };
  REQUIRE(mean(40, 50) < mean(0, 10));
}
