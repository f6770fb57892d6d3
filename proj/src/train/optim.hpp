#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "nn/params.hpp"

namespace sgsln::train {

struct AdamwOptions {
  float lr = 1e-3f;
  float weight_decay = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// AdamW with decoupled weight decay: the decay term lr*wd*theta is applied
// separately from the bias-corrected moment update, both read from the
// pre-step parameter value.
class AdamwState {
 public:
  AdamwState(const nn::ParamStore& params, AdamwOptions options);

  // Gradient lookup by parameter name; nullptr means a zero gradient.
  using GradLookup = std::function<const std::vector<float>*(const std::string&)>;

  // Applies one update to every parameter. Throws (before mutating any
  // state) when a gradient contains a non-finite value.
  void step(nn::ParamStore& params, const GradLookup& grad_of);

  int64_t step_count() const { return steps_; }
  float learning_rate() const { return opt_.lr; }
  void set_learning_rate(float lr) { opt_.lr = lr; }
  const AdamwOptions& options() const { return opt_; }

 private:
  AdamwOptions opt_;
  int64_t steps_ = 0;
  std::unordered_map<std::string, std::vector<float>> m_, v_;
};

struct PlateauOptions {
  int patience = 12;
  float factor = 0.1f;
};

// Reduce-on-plateau over validation F1. Strict improvement resets the
// counter; when the counter reaches `patience` the learning rate is
// multiplied by `factor` once and the counter resets.
struct PlateauState {
  float best_f1 = -1.0f;
  int since_improvement = 0;
};

bool plateau_step(PlateauState& state, const PlateauOptions& options, float val_f1, float& lr);

}  // namespace sgsln::train
