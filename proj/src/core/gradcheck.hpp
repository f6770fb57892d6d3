#pragma once

#include <functional>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace sgsln {

// Central-difference verification of reverse-mode gradients, run in 64-bit.
// `f` receives a tape plus the tracked probe tensor and returns a scalar
// loss built from tracked operations. The numeric side evaluates f with the
// probe perturbed by +/-eps per coordinate; the relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t coords_checked = 0;
};

using GradFn = std::function<TensorT<double>(TapeT<double>&, const TensorT<double>&)>;

// Checks all coordinates when max_coords < 0; otherwise a deterministic
// random subset of that size (drawn from coord_seed).
GradCheckReport grad_check(const GradFn& f, const TensorT<double>& x, double eps = 1e-5,
                           int max_coords = -1, uint64_t coord_seed = 0);

// Random tensor with entries uniform in [lo, hi].
template <class S>
TensorT<S> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<S> v(shape_numel(shape));
  for (auto& e : v) e = S(rng.uniform(lo, hi));
  return TensorT<S>(std::move(shape), std::move(v));
}

// Random tensor with |entries| in [0.1, hi]; keeps rectifier and max-pool
// inputs away from their kinks so central differences stay valid.
template <class S>
TensorT<S> random_tensor_off_kink(Shape shape, Rng& rng, double hi = 1.0) {
  std::vector<S> v(shape_numel(shape));
  for (auto& e : v) {
    double m = rng.uniform(0.1, hi);
    e = S(rng.bernoulli(0.5) ? m : -m);
  }
  return TensorT<S>(std::move(shape), std::move(v));
}

}  // namespace sgsln
