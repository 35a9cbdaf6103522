#pragma once

#include <cstring>
#include <fstream>

#include "architecture.hpp"

namespace snndhz {

// Named tensors in a stable order: parameters, buffers, optimizer moments
// (adam.m.* / adam.v.*), then __meta.* scalars. Values survive a save/load
// round trip bit-exactly.
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> entries;

  void put(std::string name, Tensor t) { entries.emplace_back(std::move(name), std::move(t)); }

  const Tensor* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.first == name) return &e.second;
    return nullptr;
  }

  float meta(const std::string& name, float fallback) const {
    const Tensor* t = find(name);
    return t && t->numel() == 1 ? t->data[0] : fallback;
  }
};

namespace ckpt_detail {

constexpr char kMagic[8] = {'S', 'N', 'N', 'D', 'H', 'Z', '0', '1'};

inline void put_u32(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32(const std::string& buf, size_t& pos) {
  if (pos + 4 > buf.size()) throw IoError("checkpoint: truncated file");
  uint32_t v = static_cast<uint8_t>(buf[pos]) | (static_cast<uint8_t>(buf[pos + 1]) << 8) |
               (static_cast<uint8_t>(buf[pos + 2]) << 16) |
               (static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + 3])) << 24);
  pos += 4;
  return v;
}

// Seeds can exceed float precision; split into exact 16-bit chunks.
inline Tensor encode_u64(uint64_t v) {
  Tensor t = Tensor::zeros({4});
  for (int i = 0; i < 4; ++i) t.data[static_cast<size_t>(i)] = static_cast<float>((v >> (16 * i)) & 0xffff);
  return t;
}

inline uint64_t decode_u64(const Tensor& t) {
  if (t.numel() != 4) throw IoError("checkpoint: malformed u64 field");
  uint64_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint64_t>(t.data[static_cast<size_t>(i)]) << (16 * i);
  return v;
}

}  // namespace ckpt_detail

inline void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  using namespace ckpt_detail;
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, static_cast<uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (float v : t.data) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(buf, bits);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw IoError("not a checkpoint file: " + path);
  size_t pos = sizeof(kMagic);
  uint32_t count = get_u32(buf, pos);
  Checkpoint ck;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t nlen = get_u32(buf, pos);
    if (pos + nlen > buf.size()) throw IoError("checkpoint: truncated file");
    std::string name = buf.substr(pos, nlen);
    pos += nlen;
    uint32_t rank = get_u32(buf, pos);
    if (rank > 8) throw IoError("checkpoint: implausible tensor rank");
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(get_u32(buf, pos)));
    Tensor t = Tensor::zeros(shape);
    for (long k = 0; k < t.numel(); ++k) {
      uint32_t bits = get_u32(buf, pos);
      float v;
      std::memcpy(&v, &bits, 4);
      t.data[static_cast<size_t>(k)] = v;
    }
    ck.put(std::move(name), std::move(t));
  }
  if (pos != buf.size()) throw IoError("checkpoint: trailing bytes");
  return ck;
}

inline Checkpoint snapshot_model(const DehazeModel& model, int epoch, double best_val_loss,
                                 long adam_step, bool with_optimizer) {
  Checkpoint ck;
  for (const Param& p : model.params().params()) ck.put(p.name, *p.value);
  for (const Buffer& b : model.params().buffers()) ck.put(b.name, b.value);
  if (with_optimizer && adam_step > 0) {
    for (const Param& p : model.params().params()) {
      if (p.frozen) continue;
      ck.put("adam.m." + p.name,
             p.adam_m.numel() ? p.adam_m : Tensor::zeros(p.value->shape));
      ck.put("adam.v." + p.name,
             p.adam_v.numel() ? p.adam_v : Tensor::zeros(p.value->shape));
    }
  }
  ck.put("__meta.epoch", Tensor::scalar(static_cast<float>(epoch)));
  ck.put("__meta.best_val_loss", Tensor::scalar(static_cast<float>(best_val_loss)));
  ck.put("__meta.adam_step", Tensor::scalar(static_cast<float>(adam_step)));
  const ModelConfig& mc = model.config();
  ck.put("__meta.model.zeta", Tensor::scalar(mc.zeta));
  ck.put("__meta.model.lambda", Tensor::scalar(mc.lambda));
  ck.put("__meta.model.v_th", Tensor::scalar(mc.v_th));
  ck.put("__meta.model.adaptive_threshold", Tensor::scalar(mc.adaptive_threshold ? 1.0f : 0.0f));
  ck.put("__meta.model.rgb_only", Tensor::scalar(mc.rgb_only ? 1.0f : 0.0f));
  ck.put("__meta.model.heads", Tensor::scalar(static_cast<float>(mc.heads)));
  ck.put("__meta.model.seed", ckpt_detail::encode_u64(mc.seed));
  return ck;
}

inline ModelConfig checkpoint_model_config(const Checkpoint& ck) {
  ModelConfig mc;
  mc.zeta = ck.meta("__meta.model.zeta", mc.zeta);
  mc.lambda = ck.meta("__meta.model.lambda", mc.lambda);
  mc.v_th = ck.meta("__meta.model.v_th", mc.v_th);
  mc.adaptive_threshold = ck.meta("__meta.model.adaptive_threshold", 1.0f) != 0.0f;
  mc.rgb_only = ck.meta("__meta.model.rgb_only", 0.0f) != 0.0f;
  mc.heads = static_cast<int>(ck.meta("__meta.model.heads", 1.0f));
  if (const Tensor* s = ck.find("__meta.model.seed")) mc.seed = ckpt_detail::decode_u64(*s);
  return mc;
}

inline int checkpoint_epoch(const Checkpoint& ck) {
  return static_cast<int>(ck.meta("__meta.epoch", 0.0f));
}

inline double checkpoint_best_val(const Checkpoint& ck) {
  return ck.meta("__meta.best_val_loss", std::numeric_limits<float>::quiet_NaN());
}

inline long checkpoint_adam_step(const Checkpoint& ck) {
  return static_cast<long>(ck.meta("__meta.adam_step", 0.0f));
}

// Copies every parameter, buffer, and (when present) optimizer moment into
// the model. Each model tensor must exist in the checkpoint with an exact
// shape match; unclaimed non-meta entries are an error.
inline void restore_model(DehazeModel& model, const Checkpoint& ck) {
  auto take = [&](const std::string& name, Tensor& dst, const Shape& want) {
    const Tensor* src = ck.find(name);
    if (!src) throw IoError("checkpoint missing tensor: " + name);
    if (src->shape != want)
      throw IoError("checkpoint shape mismatch for " + name + ": file " + shape_str(src->shape) +
                    " vs model " + shape_str(want));
    dst = *src;
  };
  size_t claimed = 0;
  bool has_moments = false;
  for (Param& p : model.params().params()) {
    take(p.name, *p.value, p.value->shape);
    ++claimed;
    if (!p.frozen && ck.find("adam.m." + p.name)) {
      take("adam.m." + p.name, p.adam_m, p.value->shape);
      take("adam.v." + p.name, p.adam_v, p.value->shape);
      claimed += 2;
      has_moments = true;
    }
  }
  if (!has_moments)
    for (Param& p : model.params().params()) {
      p.adam_m = Tensor{};
      p.adam_v = Tensor{};
    }
  for (Buffer& b : model.params().buffers()) {
    take(b.name, b.value, b.value.shape);
    ++claimed;
  }
  for (const auto& [name, t] : ck.entries) {
    (void)t;
    if (name.rfind("__meta.", 0) == 0) ++claimed;
  }
  if (claimed != ck.entries.size())
    for (const auto& [name, t] : ck.entries) {
      (void)t;
      if (name.rfind("__meta.", 0) == 0) continue;
      if (name.rfind("adam.", 0) == 0) continue;
      if (!model.params().find(name) && !model.params().find_buffer(name))
        throw IoError("checkpoint has unknown tensor: " + name);
    }
}

}  // namespace snndhz
