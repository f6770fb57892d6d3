#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/rng.hpp"
#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace sgsln::nn {

// Named collection of learnable tensors. Registration order is preserved so
// seeded initialization, checkpoint serialization, and optimizer traversal
// are all deterministic.
template <class S>
class ParamStoreT {
 public:
  TensorT<S>& add(const std::string& name, TensorT<S> t) {
    check(!map_.count(name), "parameter '", name, "' registered twice");
    order_.push_back(name);
    return map_[name] = std::move(t);
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  const TensorT<S>& at(const std::string& name) const {
    auto it = map_.find(name);
    check(it != map_.end(), "unknown parameter '", name, "'");
    return it->second;
  }

  // Replaces the payload of an existing parameter; shape must be unchanged.
  void set(const std::string& name, TensorT<S> t) {
    auto it = map_.find(name);
    check(it != map_.end(), "unknown parameter '", name, "'");
    check(it->second.shape() == t.shape(), "parameter '", name, "' shape ",
          shape_str(it->second.shape()), " cannot be replaced by ", shape_str(t.shape()));
    it->second = std::move(t);
  }

  const std::vector<std::string>& names() const { return order_; }
  size_t count() const { return order_.size(); }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& name : order_) n += map_.at(name).numel();
    return n;
  }

  // Tracked view: every tensor registered as a leaf on `tape`.
  ParamStoreT watch_all(TapeT<S>& tape) const {
    ParamStoreT out;
    for (const auto& name : order_) out.add(name, tape.watch(map_.at(name)));
    return out;
  }

  template <class T>
  ParamStoreT<T> cast() const {
    ParamStoreT<T> out;
    for (const auto& name : order_) out.add(name, map_.at(name).template cast<T>());
    return out;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorT<S>> map_;
};

using ParamStore = ParamStoreT<float>;

// PyTorch-default style initialization: kaiming uniform with a = sqrt(5),
// which reduces to U(-1/sqrt(fan_in), +1/sqrt(fan_in)) for both weights and
// biases. Norm scale starts at 1, shift at 0.
void register_conv2d(ParamStore& p, Rng& rng, const std::string& name, int c_in, int c_out,
                     int k, bool bias);
void register_conv1d(ParamStore& p, Rng& rng, const std::string& name, int c_in, int c_out,
                     int k, bool bias);
void register_norm(ParamStore& p, const std::string& name, int channels);

}  // namespace sgsln::nn
