#pragma once

#include <deque>
#include <string>

#include "tape.hpp"

namespace snndhz {

// Non-learnable state that still belongs in checkpoints (BN running stats).
struct Buffer {
  std::string name;
  Tensor value;
};

// Owns every parameter and buffer of a model in registration order. Order is
// part of the contract: it fixes init RNG consumption and checkpoint layout.
class ParamStore {
 public:
  Param& add(std::string name, Tensor init) {
    if (find(name)) throw ConfigError("duplicate parameter name: " + name);
    params_.emplace_back(std::move(name), std::move(init));
    return params_.back();
  }

  Buffer& add_buffer(std::string name, Tensor init) {
    if (find_buffer(name)) throw ConfigError("duplicate buffer name: " + name);
    buffers_.push_back(Buffer{std::move(name), std::move(init)});
    return buffers_.back();
  }

  Param* find(const std::string& name) {
    for (Param& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  Buffer* find_buffer(const std::string& name) {
    for (Buffer& b : buffers_)
      if (b.name == name) return &b;
    return nullptr;
  }

  std::deque<Param>& params() { return params_; }
  const std::deque<Param>& params() const { return params_; }
  std::deque<Buffer>& buffers() { return buffers_; }
  const std::deque<Buffer>& buffers() const { return buffers_; }

  long count(const std::string& prefix = "") const {
    long n = 0;
    for (const Param& p : params_)
      if (prefix.empty() || p.name.rfind(prefix, 0) == 0) n += p.numel();
    return n;
  }

  long count_learnable() const {
    long n = 0;
    for (const Param& p : params_)
      if (!p.frozen) n += p.numel();
    return n;
  }

  void zero_grad() {
    for (Param& p : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0f);
  }

  double grad_norm(const std::string& prefix = "") const {
    double s = 0.0;
    for (const Param& p : params_) {
      if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
      for (float g : p.grad.data) s += static_cast<double>(g) * g;
    }
    return std::sqrt(s);
  }

  double grad_norm_suffix(const std::string& suffix) const {
    double s = 0.0;
    for (const Param& p : params_) {
      if (p.name.size() < suffix.size() ||
          p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) != 0)
        continue;
      for (float g : p.grad.data) s += static_cast<double>(g) * g;
    }
    return std::sqrt(s);
  }

 private:
  std::deque<Param> params_;   // deque: references stay valid as layers register
  std::deque<Buffer> buffers_;
};

}  // namespace snndhz
