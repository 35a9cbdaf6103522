#pragma once

#include <cstdio>

#include "architecture.hpp"
#include "dataset.hpp"
#include "loss.hpp"

namespace snndhz {

inline Tensor clamp01(const Tensor& t) {
  Tensor out = t;
  for (float& v : out.data) v = std::min(1.0f, std::max(0.0f, v));
  return out;
}

// Peak signal-to-noise ratio against a unit dynamic range. Identical images
// return +infinity.
inline double psnr(const Tensor& ref, const Tensor& out) {
  check_same_shape(ref, out, "psnr");
  if (ref.numel() == 0) throw ShapeError("psnr: empty tensors");
  double acc = 0.0;
  for (long i = 0; i < ref.numel(); ++i) {
    double d = static_cast<double>(ref.data[static_cast<size_t>(i)]) -
               out.data[static_cast<size_t>(i)];
    acc += d * d;
  }
  double mse = acc / static_cast<double>(ref.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

// SSIM on display-ready images: both sides clamped to [0,1] first.
inline double ssim_metric(const Tensor& ref, const Tensor& out, int window = 0) {
  Val a{std::make_shared<Tensor>(clamp01(ref)), nullptr, -1};
  Val b{std::make_shared<Tensor>(clamp01(out)), nullptr, -1};
  return static_cast<double>(ssim_value(a, b, window).t->data[0]);
}

struct EvalRow {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

// Runs eval-mode inference over a paired dataset. Never mutates the model.
inline EvalReport evaluate(const DehazeModel& model, const Dataset& ds, int timesteps) {
  if (ds.empty()) throw ConfigError("evaluate: empty dataset");
  EvalReport rep;
  double psum = 0.0, ssum = 0.0;
  for (const Sample& s : ds.samples) {
    Ctx ctx;
    ForwardResult fr = model.forward(ctx, s.hazy, timesteps);
    Tensor y = clamp01(*fr.y_hat.t);
    EvalRow row;
    row.name = s.name;
    row.psnr_db = psnr(s.ref, y);
    row.ssim = ssim_metric(s.ref, y);
    psum += row.psnr_db;
    ssum += row.ssim;
    rep.rows.push_back(std::move(row));
  }
  rep.mean_psnr = psum / static_cast<double>(ds.size());
  rep.mean_ssim = ssum / static_cast<double>(ds.size());
  return rep;
}

namespace metrics_detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}
}  // namespace metrics_detail

inline std::string eval_report_text(const EvalReport& rep) {
  using metrics_detail::fmt;
  std::string out;
  char line[256];
  for (const EvalRow& r : rep.rows) {
    std::snprintf(line, sizeof(line), "%-32s psnr %8.3f dB   ssim %7.4f\n", r.name.c_str(),
                  r.psnr_db, r.ssim);
    out += line;
  }
  out += "mean psnr: " + fmt(rep.mean_psnr) + " dB\n";
  out += "mean ssim: " + fmt(rep.mean_ssim) + "\n";
  return out;
}

inline std::string eval_report_kv(const EvalReport& rep) {
  using metrics_detail::fmt;
  std::string out;
  out += "images=" + std::to_string(rep.rows.size()) + "\n";
  for (size_t i = 0; i < rep.rows.size(); ++i) {
    std::string p = "image." + std::to_string(i) + ".";
    out += p + "name=" + rep.rows[i].name + "\n";
    out += p + "psnr_db=" + fmt(rep.rows[i].psnr_db) + "\n";
    out += p + "ssim=" + fmt(rep.rows[i].ssim) + "\n";
  }
  out += "mean.psnr_db=" + fmt(rep.mean_psnr) + "\n";
  out += "mean.ssim=" + fmt(rep.mean_ssim) + "\n";
  return out;
}

}  // namespace snndhz
