#pragma once

#include <functional>
#include <vector>

#include "core/tensor.hpp"

namespace sgsln {

// Reverse-mode differentiation tape. Operations append records in execution
// order; backward() walks them in strict reverse append order. Gradient
// accumulation is additive, so a tensor consumed by several operations
// receives the sum of all contributions.
//
// A tape is confined to one thread for its lifetime and must outlive every
// tensor tracked on it.
template <class S>
class TapeT {
 public:
  // Called with the gradient of the record's output; accumulates into the
  // parents' buffers via grad_buf().
  using BackwardFn = std::function<void(const std::vector<S>& grad_out, TapeT& tape)>;

  TapeT() = default;
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  // Registers `t` as a differentiable leaf and returns the tracked alias.
  TensorT<S> watch(const TensorT<S>& t) {
    check(t.defined(), "watch() on undefined tensor");
    TensorT<S> out = t.detach();
    out.tape_ = this;
    out.node_ = alloc_node(t.numel(), nullptr);
    return out;
  }

  // Creates a tracked tensor whose backward contribution is `fn`.
  TensorT<S> emit(Shape shape, std::vector<S> values, BackwardFn fn) {
    TensorT<S> out(std::move(shape), std::move(values));
    out.tape_ = this;
    out.node_ = alloc_node(out.numel(), std::move(fn));
    return out;
  }

  TensorT<S> emit(Shape shape, std::shared_ptr<const std::vector<S>> values, BackwardFn fn) {
    TensorT<S> out(std::move(shape), std::move(values));
    out.tape_ = this;
    out.node_ = alloc_node(out.numel(), std::move(fn));
    return out;
  }

  // Gradient buffer of a node, zero-initialized on first access.
  std::vector<S>& grad_buf(int node) {
    auto& rec = recs_.at(size_t(node));
    if (rec.grad.empty()) rec.grad.assign(rec.numel, S(0));
    return rec.grad;
  }

  bool has_grad(int node) const { return !recs_.at(size_t(node)).grad.empty(); }

  // Gradient of a tracked tensor after backward(); nullptr when no gradient
  // flowed to it (or it is untracked).
  const std::vector<S>* grad(const TensorT<S>& t) const {
    if (!t.tracked() || t.tape() != this) return nullptr;
    const auto& g = recs_.at(size_t(t.node())).grad;
    return g.empty() ? nullptr : &g;
  }

  // Seeds d(loss)/d(loss) = 1 and runs every record's backward in reverse
  // append order. `loss` must be a scalar tracked on this tape.
  void backward(const TensorT<S>& loss) {
    check(loss.tracked() && loss.tape() == this, "backward() on tensor not tracked by this tape");
    check(loss.numel() == 1, "backward() requires a scalar loss, got ", shape_str(loss.shape()));
    check(!ran_backward_, "backward() may run only once per tape");
    ran_backward_ = true;
    grad_buf(loss.node())[0] += S(1);
    for (int i = int(recs_.size()) - 1; i >= 0; --i) {
      auto& rec = recs_[size_t(i)];
      if (rec.fn && !rec.grad.empty()) rec.fn(rec.grad, *this);
    }
  }

  size_t size() const { return recs_.size(); }

 private:
  struct Record {
    size_t numel = 0;
    BackwardFn fn;  // null for leaves
    std::vector<S> grad;
  };

  int alloc_node(size_t numel, BackwardFn fn) {
    recs_.push_back(Record{numel, std::move(fn), {}});
    return int(recs_.size()) - 1;
  }

  std::vector<Record> recs_;
  bool ran_backward_ = false;
};

using Tape = TapeT<float>;
using Tape64 = TapeT<double>;

// The tape shared by all tracked operands; nullptr when none is tracked.
// Mixing tensors from different tapes is rejected.
template <class S>
TapeT<S>* joint_tape(std::initializer_list<const TensorT<S>*> ts) {
  TapeT<S>* tape = nullptr;
  for (const TensorT<S>* t : ts) {
    if (!t || !t->tracked()) continue;
    if (!tape) {
      tape = t->tape();
    } else {
      check(tape == t->tape(), "operands tracked on different tapes");
    }
  }
  return tape;
}

}  // namespace sgsln
