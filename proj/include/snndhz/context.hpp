#pragma once

#include <unordered_map>

#include "ops.hpp"
#include "params.hpp"

namespace snndhz {

// One row per weighted operation (conv, deconv, dwconv, attention matmul).
// flops counts multiplies for a single presentation (one timestep); events
// count nonzero inputs summed over the whole T-step run.
struct WeightOpTrace {
  std::string name;
  std::string kind;
  double flops = 0.0;
  double input_events = 0.0;
  long neurons_per_step = 0;
  int steps = 1;
  bool binary_input = true;
  bool direct_coded = false;
};

// One row per spiking layer: total emitted spikes over the run.
struct SpikeTrace {
  std::string name;
  double spike_total = 0.0;
  long neurons_per_step = 0;
  int steps = 1;
  std::shared_ptr<Tensor> spikes;  // retained only when keep_tensors is set
};

struct TraceCollector {
  bool keep_tensors = false;
  std::vector<WeightOpTrace> weight_ops;
  std::vector<SpikeTrace> spike_layers;

  void add_weight_op(const std::string& name, const std::string& kind, double flops,
                     const Tensor& input, int steps, bool direct_coded) {
    WeightOpTrace r;
    r.name = name;
    r.kind = kind;
    r.flops = flops;
    r.steps = steps;
    r.direct_coded = direct_coded;
    r.neurons_per_step = input.numel() / steps;
    long nz = 0;
    bool binary = true;
    for (float v : input.data) {
      if (v != 0.0f) {
        ++nz;
        if (v != 1.0f) binary = false;
      }
    }
    r.input_events = static_cast<double>(nz);
    r.binary_input = binary;
    weight_ops.push_back(std::move(r));
  }

  void add_spike_layer(const std::string& name, const std::shared_ptr<Tensor>& spikes, int steps) {
    SpikeTrace r;
    r.name = name;
    r.steps = steps;
    r.neurons_per_step = spikes->numel() / steps;
    r.spike_total = sum_double(spikes->ptr(), spikes->numel());
    if (keep_tensors) r.spikes = spikes;
    spike_layers.push_back(std::move(r));
  }
};

// Per-forward context: the tape (null in immediate mode), train/eval mode,
// and an optional trace sink. Caches parameter leaves so one forward pass
// registers each parameter once.
struct Ctx {
  Tape* tape = nullptr;
  bool training = false;
  TraceCollector* trace = nullptr;

  Val param(Param& p) {
    if (!tape) return Val{p.value, nullptr, -1};
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return it->second;
    Val v = tape->leaf(p);
    leaf_cache_.emplace(&p, v);
    return v;
  }

  Val constant(Tensor t) { return make_constant(tape, std::move(t)); }

 private:
  std::unordered_map<const Param*, Val> leaf_cache_;
};

}  // namespace snndhz
