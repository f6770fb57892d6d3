#pragma once

#include "core/ops.hpp"
#include "model/model.hpp"

namespace sgsln::train {

// Binary cross entropy (mean over elements) plus dice deficit:
//   L = mean BCE + 1 - (2*sum(p*g) + 1) / (sum p + sum g + 1)
// Predictions are clamped to [1e-7, 1-1e-7] before the logarithm; the clamp
// gates the gradient. Returns a scalar tensor tracked when `pred` is.
template <class S>
TensorT<S> bce_dice_loss(const TensorT<S>& pred, const TensorT<S>& target);

// Weighted triple-branch supervision:
//   wf * L(fusion, label) + w1 * L(t1, label_half) + w2 * L(t2, label_half)
// Branch terms with zero weight are skipped entirely; a nonzero weight with
// a missing branch mask is rejected. `label_half` is the 2x2 max-pooled
// label and may be undefined when both branch weights are zero.
template <class S>
TensorT<S> triple_loss(const model::MasksT<S>& masks, const TensorT<S>& label,
                       const TensorT<S>& label_half, S w_fusion, S w_t1, S w_t2);

}  // namespace sgsln::train
