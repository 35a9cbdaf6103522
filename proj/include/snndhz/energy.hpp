#pragma once

#include <cstdio>

#include "context.hpp"

namespace snndhz {

// 45 nm CMOS op costs in joules.
struct CmosCosts {
  double e_mac = 4.6e-12;
  double e_acc = 0.9e-12;
};

// strict: every synaptic operation is priced as an accumulate.
// mac_first: operations on the direct-coded (analog pixel) layers are priced
// as multiply-accumulates; all spike-driven layers stay accumulates.
enum class EnergyMode { strict, mac_first };

inline const char* energy_mode_name(EnergyMode m) {
  return m == EnergyMode::strict ? "strict" : "mac-first";
}

inline EnergyMode parse_energy_mode(const std::string& s) {
  if (s == "strict") return EnergyMode::strict;
  if (s == "mac-first") return EnergyMode::mac_first;
  throw ConfigError("unknown energy mode '" + s + "' (expected strict or mac-first)");
}

// Mean spikes per neuron over the whole run; ranges over [0, T].
inline double spike_rate(const SpikeTrace& trace) {
  if (trace.neurons_per_step <= 0) throw ConfigError("spike_rate: empty layer trace");
  return trace.spike_total / static_cast<double>(trace.neurons_per_step);
}

inline double input_rate(const WeightOpTrace& trace) {
  if (trace.neurons_per_step <= 0) throw ConfigError("input_rate: empty op trace");
  return trace.input_events / static_cast<double>(trace.neurons_per_step);
}

struct EnergyRow {
  std::string name;
  std::string kind;
  double flops = 0.0;        // multiplies for one timestep
  double events = 0.0;       // nonzero inputs over the whole run
  long neurons = 0;          // input size per timestep
  int steps = 1;
  double s_r = 0.0;          // events / neurons, in [0, T]
  double sops = 0.0;         // flops * s_r
  double energy_j = 0.0;
  bool direct_coded = false;
};

struct EnergyReport {
  EnergyMode mode = EnergyMode::mac_first;
  int steps = 1;
  std::vector<EnergyRow> rows;
  double total_flops = 0.0;
  double total_sops = 0.0;
  double e_snn = 0.0;
  double e_cnn = 0.0;   // same stack with every multiply always executed
  double delta_e_pct = 0.0;
  double energy_ratio = 0.0;
};

inline EnergyReport build_energy_report(const TraceCollector& tc, EnergyMode mode,
                                        const CmosCosts& costs = {}) {
  EnergyReport rep;
  rep.mode = mode;
  for (const WeightOpTrace& w : tc.weight_ops) {
    EnergyRow r;
    r.name = w.name;
    r.kind = w.kind;
    r.flops = w.flops;
    r.events = w.input_events;
    r.neurons = w.neurons_per_step;
    r.steps = w.steps;
    r.direct_coded = w.direct_coded;
    r.s_r = input_rate(w);
    r.sops = r.flops * r.s_r;
    double unit = (mode == EnergyMode::mac_first && w.direct_coded) ? costs.e_mac : costs.e_acc;
    r.energy_j = r.sops * unit;
    rep.steps = std::max(rep.steps, w.steps);
    rep.total_flops += r.flops;
    rep.total_sops += r.sops;
    rep.e_snn += r.energy_j;
    rep.rows.push_back(std::move(r));
  }
  // Totals are priced once from the summed op counts; summing per-row energies
  // instead can land an ulp away from total_sops * e_acc.
  rep.e_cnn = rep.total_flops * costs.e_mac;
  if (mode == EnergyMode::strict) rep.e_snn = rep.total_sops * costs.e_acc;
  if (rep.e_cnn > 0.0) rep.delta_e_pct = (rep.e_cnn - rep.e_snn) / rep.e_cnn * 100.0;
  rep.energy_ratio = rep.e_snn > 0.0 ? rep.e_cnn / rep.e_snn
                                     : std::numeric_limits<double>::infinity();
  return rep;
}

namespace energy_detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace energy_detail

inline std::string energy_report_text(const EnergyReport& rep) {
  using energy_detail::fmt;
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %-8s %12s %10s %14s %12s\n", "layer", "kind", "flops",
                "s_r", "sops", "energy_j");
  out += line;
  for (const EnergyRow& r : rep.rows) {
    std::snprintf(line, sizeof(line), "%-28s %-8s %12.4g %10.4f %14.6g %12.4g\n", r.name.c_str(),
                  r.kind.c_str(), r.flops, r.s_r, r.sops, r.energy_j);
    out += line;
  }
  out += "mode: " + std::string(energy_mode_name(rep.mode)) + "\n";
  out += "timesteps: " + std::to_string(rep.steps) + "\n";
  out += "total flops/step: " + fmt(rep.total_flops) + "\n";
  out += "total sops: " + fmt(rep.total_sops) + " (" + fmt(rep.total_sops * 1e-9) + " G)\n";
  out += "energy snn: " + fmt(rep.e_snn) + " J\n";
  out += "energy cnn: " + fmt(rep.e_cnn) + " J\n";
  out += "energy saving: " + fmt(rep.delta_e_pct) + " %\n";
  out += "energy ratio (cnn/snn): " + fmt(rep.energy_ratio) + "\n";
  return out;
}

inline std::string energy_report_kv(const EnergyReport& rep) {
  using energy_detail::fmt;
  std::string out;
  out += "mode=" + std::string(energy_mode_name(rep.mode)) + "\n";
  out += "timesteps=" + std::to_string(rep.steps) + "\n";
  out += "rows=" + std::to_string(rep.rows.size()) + "\n";
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    const EnergyRow& r = rep.rows[i];
    std::string p = "row." + std::to_string(i) + ".";
    out += p + "name=" + r.name + "\n";
    out += p + "kind=" + r.kind + "\n";
    out += p + "flops=" + fmt(r.flops) + "\n";
    out += p + "events=" + fmt(r.events) + "\n";
    out += p + "neurons=" + std::to_string(r.neurons) + "\n";
    out += p + "spike_rate=" + fmt(r.s_r) + "\n";
    out += p + "sops=" + fmt(r.sops) + "\n";
    out += p + "energy_j=" + fmt(r.energy_j) + "\n";
    out += p + "direct_coded=" + std::string(r.direct_coded ? "1" : "0") + "\n";
  }
  out += "total.flops=" + fmt(rep.total_flops) + "\n";
  out += "total.sops=" + fmt(rep.total_sops) + "\n";
  out += "total.sops_g=" + fmt(rep.total_sops * 1e-9) + "\n";
  out += "energy.snn_j=" + fmt(rep.e_snn) + "\n";
  out += "energy.cnn_j=" + fmt(rep.e_cnn) + "\n";
  out += "energy.delta_pct=" + fmt(rep.delta_e_pct) + "\n";
  out += "energy.ratio=" + fmt(rep.energy_ratio) + "\n";
  return out;
}

}  // namespace snndhz
