#include "train/optim.hpp"

#include <cmath>

namespace sgsln::train {

AdamwState::AdamwState(const nn::ParamStore& params, AdamwOptions options) : opt_(options) {
  for (const auto& name : params.names()) {
    const size_t n = params.at(name).numel();
    m_.emplace(name, std::vector<float>(n, 0.0f));
    v_.emplace(name, std::vector<float>(n, 0.0f));
  }
}

void AdamwState::step(nn::ParamStore& params, const GradLookup& grad_of) {
  // Validate every gradient before touching any parameter or moment, so an
  // aborted step leaves the optimizer state untouched.
  for (const auto& name : params.names()) {
    const std::vector<float>* g = grad_of(name);
    if (!g) continue;
    check(g->size() == params.at(name).numel(), "adamw: gradient size for '", name,
          "' does not match the parameter");
    for (float v : *g) {
      check(std::isfinite(v), "adamw: non-finite gradient in '", name, "', step aborted");
    }
  }

  ++steps_;
  const float b1 = opt_.beta1, b2 = opt_.beta2;
  const float bias1 = 1.0f - std::pow(b1, float(steps_));
  const float bias2 = 1.0f - std::pow(b2, float(steps_));
  for (const auto& name : params.names()) {
    const std::vector<float>* g = grad_of(name);
    const Tensor& theta = params.at(name);
    std::vector<float>& m = m_.at(name);
    std::vector<float>& v = v_.at(name);
    std::vector<float> next(theta.numel());
    const auto& tv = theta.data();
    for (size_t i = 0; i < next.size(); ++i) {
      const float gi = g ? (*g)[i] : 0.0f;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      const float mhat = m[i] / bias1;
      const float vhat = v[i] / bias2;
      next[i] = tv[i] - opt_.lr * opt_.weight_decay * tv[i] -
                opt_.lr * mhat / (std::sqrt(vhat) + opt_.eps);
    }
    params.set(name, Tensor(theta.shape(), std::move(next)));
  }
}

bool plateau_step(PlateauState& state, const PlateauOptions& options, float val_f1, float& lr) {
  if (val_f1 > state.best_f1) {
    state.best_f1 = val_f1;
    state.since_improvement = 0;
    return false;
  }
  ++state.since_improvement;
  if (state.since_improvement >= options.patience) {
    lr *= options.factor;
    state.since_improvement = 0;
    return true;
  }
  return false;
}

}  // namespace sgsln::train
