#pragma once

#include <functional>
#include <memory>
#include <utility>

#include "tensor.hpp"

namespace snndhz {

// Learnable parameter. grad accumulates across backward passes until zeroed;
// adam_m/adam_v are owned here so checkpoints can carry optimizer state.
struct Param {
  std::string name;
  std::shared_ptr<Tensor> value;
  Tensor grad;
  Tensor adam_m, adam_v;
  bool frozen = false;

  Param(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::make_shared<Tensor>(std::move(init))),
        grad(Tensor::zeros(value->shape)) {}

  long numel() const { return value->numel(); }
};

class Tape;

// A value in a computation. tape == nullptr means immediate mode: the value
// carries no history and backward through it is a contract violation.
struct Val {
  std::shared_ptr<Tensor> t;
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& tensor() const { return *t; }
  const Shape& shape() const { return t->shape; }
  long numel() const { return t->numel(); }
  bool recorded() const { return tape != nullptr; }
};

struct TapeNode {
  std::shared_ptr<Tensor> value;
  std::vector<int> parents;
  // Reads this node's gradient from the tape and accumulates into parents.
  std::function<void(Tape&, int)> backward;
  Param* param = nullptr;
  bool requires_grad = false;
};

// Define-by-run reverse-mode tape. Nodes are appended in execution order, so
// index order is a topological order and backward is a single reverse sweep.
class Tape {
 public:
  int size() const { return static_cast<int>(nodes_.size()); }

  void clear() {
    nodes_.clear();
    grads_.clear();
  }

  Val leaf(Param& p) {
    TapeNode n;
    n.value = p.value;
    n.param = &p;
    n.requires_grad = !p.frozen;
    nodes_.push_back(std::move(n));
    return Val{p.value, this, size() - 1};
  }

  Val constant(std::shared_ptr<Tensor> t) {
    TapeNode n;
    n.value = t;
    nodes_.push_back(std::move(n));
    return Val{std::move(t), this, size() - 1};
  }

  Val constant(Tensor t) { return constant(std::make_shared<Tensor>(std::move(t))); }

  Val record(std::shared_ptr<Tensor> out, std::vector<int> parents,
             std::function<void(Tape&, int)> backward) {
    TapeNode n;
    n.value = out;
    n.parents = std::move(parents);
    for (int p : n.parents)
      if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Val{std::move(out), this, size() - 1};
  }

  bool wants_grad(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  const Tensor& value(int id) const { return *nodes_[static_cast<size_t>(id)].value; }

  // Gradient buffer for a node, allocated on first touch during backward.
  Tensor& grad_buf(int id) {
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.shape.empty()) g = Tensor::zeros(nodes_[static_cast<size_t>(id)].value->shape);
    return g;
  }

  bool grad_set(int id) const { return !grads_[static_cast<size_t>(id)].shape.empty(); }

  const Tensor& grad(int id) const {
    if (!grad_set(id)) throw NumericError("gradient not computed for node");
    return grads_[static_cast<size_t>(id)];
  }

  // Reverse sweep from a scalar loss. Each node's backward runs exactly once;
  // parameter gradients accumulate into Param::grad.
  void backward(const Val& loss) {
    if (loss.tape != this || loss.id < 0)
      throw NumericError("backward: value was not recorded on this tape");
    if (loss.numel() != 1) throw NumericError("backward: loss must be scalar");
    grads_.assign(nodes_.size(), Tensor{});
    grad_buf(loss.id).data[0] = 1.0f;
    for (int i = loss.id; i >= 0; --i) {
      TapeNode& n = nodes_[static_cast<size_t>(i)];
      if (!n.requires_grad || !grad_set(i)) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param && !n.param->frozen) {
        const Tensor& g = grads_[static_cast<size_t>(i)];
        float* acc = n.param->grad.ptr();
        const float* src = g.ptr();
        for (long k = 0; k < g.numel(); ++k) acc[k] += src[k];
      }
    }
  }

 private:
  std::vector<TapeNode> nodes_;
  std::vector<Tensor> grads_;
};

inline void accumulate(Tensor& acc, const float* src) {
  float* a = acc.ptr();
  for (long i = 0; i < acc.numel(); ++i) a[i] += src[i];
}

// Resolves the tape shared by a set of operands; mixing tapes is an error.
inline Tape* common_tape(std::initializer_list<const Val*> vals) {
  Tape* t = nullptr;
  for (const Val* v : vals) {
    if (!v->tape) continue;
    if (!t)
      t = v->tape;
    else if (t != v->tape)
      throw NumericError("operands were recorded on different tapes");
  }
  return t;
}

// Node id of v on tape tp, registering untaped values as constants.
inline int node_id(Tape& tp, const Val& v) {
  if (v.tape == &tp) return v.id;
  if (v.tape == nullptr) return tp.constant(v.t).id;
  throw NumericError("operand belongs to a different tape");
}

inline Val make_val(std::shared_ptr<Tensor> out, Tape* tp, std::vector<int> parents,
                    std::function<void(Tape&, int)> backward) {
  if (!tp) return Val{std::move(out), nullptr, -1};
  return tp->record(std::move(out), std::move(parents), std::move(backward));
}

// Value sharing storage but carrying no history. Gradients do not flow past it.
inline Val detach(const Val& v) { return Val{v.t, nullptr, -1}; }

}  // namespace snndhz
