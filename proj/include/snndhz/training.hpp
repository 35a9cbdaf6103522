#pragma once

#include <functional>
#include <numeric>

#include "checkpoint.hpp"
#include "dataset.hpp"
#include "loss.hpp"
#include "metrics.hpp"

namespace snndhz {

struct TrainConfig {
  int epochs = 100;
  float lr = 0.001f;
  int timesteps = 10;
  int resolution = 512;
  int batch_size = 1;
  int validation_start_epoch = 20;  // first epoch (1-based) that runs validation
  uint64_t seed = 1;
  LossWeights loss;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("train: lr must be positive");
    if (timesteps < 1) throw ConfigError("train: timesteps must be >= 1");
    if (resolution < 8 || resolution % 8 != 0)
      throw ConfigError("train: resolution must be a positive multiple of 8");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (validation_start_epoch < 1) throw ConfigError("train: validation_start_epoch must be >= 1");
    if (loss.alpha < 0.0f || loss.beta < 0.0f)
      throw ConfigError("train: loss weights must be nonnegative");
  }
};

struct AdamConfig {
  float lr = 0.001f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  AdamConfig& config() { return cfg_; }
  long step_count() const { return step_; }
  void set_step_count(long s) { step_ = s; }

  void step(ParamStore& ps) {
    ++step_;
    float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(step_));
    float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(step_));
    for (Param& p : ps.params()) {
      if (p.frozen) continue;
      if (p.adam_m.numel() == 0) {
        p.adam_m = Tensor::zeros(p.value->shape);
        p.adam_v = Tensor::zeros(p.value->shape);
      }
      float* w = p.value->ptr();
      float* m = p.adam_m.ptr();
      float* v = p.adam_v.ptr();
      const float* g = p.grad.ptr();
      long n = p.value->numel();
      for (long i = 0; i < n; ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
        float mh = m[i] / bc1;
        float vh = v[i] / bc2;
        w[i] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long step_ = 0;
};

struct StepResult {
  float loss = 0.0f;
  double grad_norm = 0.0;
  double threshold_grad_norm = 0.0;
  bool applied = false;  // false when a non-finite loss aborted the update
};

// One optimizer step over a mini-batch. Every sample runs a fresh T-step
// presentation (neuron state never carries across samples); the scalar loss
// is the mean of per-sample losses. A non-finite loss leaves the parameters
// untouched and reports applied = false.
inline StepResult train_step(DehazeModel& model, const std::vector<const Sample*>& batch,
                             Adam& opt, const TrainConfig& cfg) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  Tape tape;
  Ctx ctx;
  ctx.tape = &tape;
  ctx.training = true;
  float inv = 1.0f / static_cast<float>(batch.size());
  Val total;
  for (const Sample* s : batch) {
    ForwardResult fr = model.forward(ctx, s->hazy, cfg.timesteps);
    Val ref = ctx.constant(s->ref);
    Val l = scale(net_loss(ref, fr.y_hat, cfg.loss), inv);
    total = total.t ? add(total, l) : l;
  }
  StepResult res;
  res.loss = total.t->data[0];
  if (!std::isfinite(res.loss)) return res;
  model.params().zero_grad();
  tape.backward(total);
  res.grad_norm = model.params().grad_norm("");
  res.threshold_grad_norm = model.params().grad_norm_suffix(".v_th");
  if (!std::isfinite(res.grad_norm)) return res;
  opt.step(model.params());
  res.applied = true;
  return res;
}

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
  int steps = 0;
  int skipped_steps = 0;
};

struct FitResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;  // 0 when validation never ran
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  Checkpoint best;
  Checkpoint last;
};

inline double validation_loss(const DehazeModel& model, const Dataset& val,
                              const TrainConfig& cfg) {
  double acc = 0.0;
  for (const Sample& s : val.samples) {
    Ctx ctx;
    ForwardResult fr = model.forward(ctx, s.hazy, cfg.timesteps);
    Val ref{std::make_shared<Tensor>(s.ref), nullptr, -1};
    acc += static_cast<double>(net_loss(ref, fr.y_hat, cfg.loss).t->data[0]);
  }
  return acc / static_cast<double>(val.size());
}

// Epoch loop with deterministic shuffling (derived from cfg.seed and the
// epoch index, so resumed runs see the same sample order). Validation runs
// from validation_start_epoch on; best is the checkpoint with the lowest
// validation loss, ties going to the earlier epoch. start_epoch continues a
// resumed run: epochs start_epoch+1 .. cfg.epochs.
inline FitResult fit(DehazeModel& model, const Dataset& train, const Dataset& val,
                     const TrainConfig& cfg, Adam& opt, int start_epoch = 0,
                     const std::function<void(const EpochLog&)>& on_epoch = nullptr) {
  cfg.validate();
  if (train.empty()) throw ConfigError("fit: empty training set");
  if (val.empty()) throw ConfigError("fit: empty validation set");
  if (start_epoch < 0 || start_epoch > cfg.epochs)
    throw ConfigError("fit: start_epoch out of range");

  FitResult res;
  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(cfg.seed * 2654435761u + static_cast<uint64_t>(epoch));
    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle_indices(order);
    EpochLog log;
    log.epoch = epoch;
    double loss_acc = 0.0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      std::vector<const Sample*> batch;
      for (size_t j = at; j < std::min(order.size(), at + static_cast<size_t>(cfg.batch_size)); ++j)
        batch.push_back(&train.samples[static_cast<size_t>(order[j])]);
      StepResult sr = train_step(model, batch, opt, cfg);
      if (sr.applied) {
        loss_acc += sr.loss;
        ++log.steps;
      } else {
        ++log.skipped_steps;
      }
    }
    log.train_loss = log.steps ? loss_acc / log.steps : std::numeric_limits<double>::quiet_NaN();
    if (epoch >= cfg.validation_start_epoch) {
      log.has_val = true;
      log.val_loss = validation_loss(model, val, cfg);
      if (!(res.best_epoch > 0) || log.val_loss < res.best_val_loss) {
        res.best_epoch = epoch;
        res.best_val_loss = log.val_loss;
        res.best = snapshot_model(model, epoch, log.val_loss, opt.step_count(), true);
      }
    }
    res.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  res.last = snapshot_model(model, cfg.epochs, res.best_val_loss, opt.step_count(), true);
  if (res.best_epoch == 0) {
    res.best = res.last;
    res.best_epoch = cfg.epochs;
  }
  return res;
}

}  // namespace snndhz
