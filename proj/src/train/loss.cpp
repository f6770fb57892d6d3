#include "train/loss.hpp"

#include <cmath>

namespace sgsln::train {

template <class S>
TensorT<S> bce_dice_loss(const TensorT<S>& pred, const TensorT<S>& target) {
  check(pred.defined() && target.defined(), "loss: undefined operand");
  check(pred.shape() == target.shape(), "loss: prediction shape ", shape_str(pred.shape()),
        " does not match target shape ", shape_str(target.shape()));
  const size_t n = pred.numel();
  check(n > 0, "loss: empty tensors");

  const S lo = S(1e-7), hi = S(1) - S(1e-7);
  const S dice_eps = S(1);
  const S* pp = pred.data().data();
  const S* gp = target.data().data();

  auto clamped = std::make_shared<std::vector<S>>(n);
  S bce = S(0);
  S sum_pg = S(0), sum_p = S(0), sum_g = S(0);
  for (size_t i = 0; i < n; ++i) {
    const S q = std::min(std::max(pp[i], lo), hi);
    (*clamped)[i] = q;
    bce += -(gp[i] * std::log(q) + (S(1) - gp[i]) * std::log(S(1) - q));
    sum_pg += q * gp[i];
    sum_p += q;
    sum_g += gp[i];
  }
  bce /= S(n);
  const S a = S(2) * sum_pg + dice_eps;
  const S b = sum_p + sum_g + dice_eps;
  const S value = bce + (S(1) - a / b);

  TapeT<S>* tape = joint_tape<S>({&pred, &target});
  if (!tape) return TensorT<S>(Shape{1}, std::vector<S>{value});
  const int pn = pred.node();
  auto ps = pred.storage();
  auto gs = target.storage();
  return tape->emit(Shape{1}, std::vector<S>{value},
                    [=](const std::vector<S>& g, TapeT<S>& tp) {
    if (pn < 0) return;
    std::vector<S>& dp = tp.grad_buf(pn);
    const S go = g[0];
    const S* praw = ps->data();
    const S* graw = gs->data();
    for (size_t i = 0; i < n; ++i) {
      if (praw[i] <= lo || praw[i] >= hi) continue;  // clamp gates the gradient
      const S q = (*clamped)[i];
      const S dbce = (-graw[i] / q + (S(1) - graw[i]) / (S(1) - q)) / S(n);
      const S ddice = (a - S(2) * graw[i] * b) / (b * b);
      dp[i] += go * (dbce + ddice);
    }
  });
}

template <class S>
TensorT<S> triple_loss(const model::MasksT<S>& masks, const TensorT<S>& label,
                       const TensorT<S>& label_half, S w_fusion, S w_t1, S w_t2) {
  check(masks.fusion.defined(), "triple_loss: fusion mask missing");
  TensorT<S> total = scale(bce_dice_loss(masks.fusion, label), w_fusion);
  if (w_t1 != S(0)) {
    check(masks.t1.has_value(), "triple_loss: branch weight w_t1=", w_t1,
          " but the t1 branch mask is absent");
    total = add(total, scale(bce_dice_loss(*masks.t1, label_half), w_t1));
  }
  if (w_t2 != S(0)) {
    check(masks.t2.has_value(), "triple_loss: branch weight w_t2=", w_t2,
          " but the t2 branch mask is absent");
    total = add(total, scale(bce_dice_loss(*masks.t2, label_half), w_t2));
  }
  return total;
}

#define SGSLN_INSTANTIATE_LOSS(S)                                                       \
  template TensorT<S> bce_dice_loss<S>(const TensorT<S>&, const TensorT<S>&);           \
  template TensorT<S> triple_loss<S>(const model::MasksT<S>&, const TensorT<S>&,        \
                                     const TensorT<S>&, S, S, S);

SGSLN_INSTANTIATE_LOSS(float)
SGSLN_INSTANTIATE_LOSS(double)

#undef SGSLN_INSTANTIATE_LOSS

}  // namespace sgsln::train
