#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace sgsln {

template <class S>
class TapeT;

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int e : s) {
    check(e >= 0, "negative extent ", e, " in shape");
    n *= size_t(e);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense n-dimensional array in row-major layout (N,C,H,W for image data).
// The payload is immutable and shared between copies; every operation
// returns a new tensor. A tensor may additionally be tracked on a tape,
// in which case `node()` indexes its record for reverse-mode gradients.
template <class S>
class TensorT {
 public:
  using Scalar = S;

  TensorT() = default;

  explicit TensorT(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<const std::vector<S>>(shape_numel(shape_), S(0))) {}

  TensorT(Shape shape, std::vector<S> values) : shape_(std::move(shape)) {
    check(values.size() == shape_numel(shape_), "tensor data size ", values.size(),
          " does not match shape ", shape_str(shape_));
    data_ = std::make_shared<const std::vector<S>>(std::move(values));
  }

  TensorT(Shape shape, std::shared_ptr<const std::vector<S>> values)
      : shape_(std::move(shape)), data_(std::move(values)) {
    check(data_ && data_->size() == shape_numel(shape_), "tensor payload does not match shape ",
          shape_str(shape_));
  }

  static TensorT full(Shape shape, S value) {
    size_t n = shape_numel(shape);
    return TensorT(std::move(shape), std::vector<S>(n, value));
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return int(shape_.size()); }
  int dim(int i) const { return shape_.at(size_t(i)); }
  size_t numel() const { return data_ ? data_->size() : 0; }
  const std::vector<S>& data() const { return *data_; }
  const std::shared_ptr<const std::vector<S>>& storage() const { return data_; }
  S operator[](size_t i) const { return (*data_)[i]; }

  S at(std::initializer_list<int> idx) const {
    check(idx.size() == shape_.size(), "index rank mismatch");
    size_t lin = 0;
    int d = 0;
    for (int i : idx) {
      check(i >= 0 && i < shape_[size_t(d)], "index ", i, " out of range for dim ", d);
      lin = lin * size_t(shape_[size_t(d)]) + size_t(i);
      ++d;
    }
    return (*data_)[lin];
  }

  // Scalar extraction; requires numel()==1.
  S value() const {
    check(numel() == 1, "value() on non-scalar tensor ", shape_str(shape_));
    return (*data_)[0];
  }

  bool tracked() const { return node_ >= 0; }
  int node() const { return node_; }
  TapeT<S>* tape() const { return tape_; }

  // Same payload, no tape linkage.
  TensorT detach() const {
    TensorT t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
  }

  template <class T>
  TensorT<T> cast() const {
    std::vector<T> out(numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = T((*data_)[i]);
    return TensorT<T>(shape_, std::move(out));
  }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<S>> data_;
  TapeT<S>* tape_ = nullptr;
  int node_ = -1;

  friend class TapeT<S>;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

}  // namespace sgsln
