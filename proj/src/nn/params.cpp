#include "nn/params.hpp"

#include <cmath>

namespace sgsln::nn {

namespace {

Tensor uniform_tensor(Shape shape, Rng& rng, double bound) {
  std::vector<float> v(shape_numel(shape));
  for (auto& e : v) e = float(rng.uniform(-bound, bound));
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

void register_conv2d(ParamStore& p, Rng& rng, const std::string& name, int c_in, int c_out,
                     int k, bool bias) {
  const double bound = 1.0 / std::sqrt(double(c_in) * k * k);
  p.add(name + ".w", uniform_tensor({c_out, c_in, k, k}, rng, bound));
  if (bias) p.add(name + ".b", uniform_tensor({c_out}, rng, bound));
}

void register_conv1d(ParamStore& p, Rng& rng, const std::string& name, int c_in, int c_out,
                     int k, bool bias) {
  const double bound = 1.0 / std::sqrt(double(c_in) * k);
  p.add(name + ".w", uniform_tensor({c_out, c_in, k}, rng, bound));
  if (bias) p.add(name + ".b", uniform_tensor({c_out}, rng, bound));
}

void register_norm(ParamStore& p, const std::string& name, int channels) {
  p.add(name + ".gamma", Tensor::full({channels}, 1.0f));
  p.add(name + ".beta", Tensor({channels}));
}

}  // namespace sgsln::nn
