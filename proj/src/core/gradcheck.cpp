#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sgsln {

GradCheckReport grad_check(const GradFn& f, const TensorT<double>& x, double eps,
                           int max_coords, uint64_t coord_seed) {
  check(x.defined() && x.numel() > 0, "grad_check: probe tensor is empty");
  check(!x.tracked(), "grad_check: probe tensor must be untracked");

  // Analytic gradient.
  std::vector<double> analytic(x.numel(), 0.0);
  {
    TapeT<double> tape;
    TensorT<double> xt = tape.watch(x);
    TensorT<double> loss = f(tape, xt);
    check(loss.numel() == 1, "grad_check: f must return a scalar, got ",
          shape_str(loss.shape()));
    tape.backward(loss);
    if (const std::vector<double>* g = tape.grad(xt)) analytic = *g;
  }

  // Coordinate subset.
  std::vector<size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), size_t(0));
  if (max_coords >= 0 && size_t(max_coords) < coords.size()) {
    Rng rng(mix_seed(coord_seed, 0x67c0de));
    for (size_t i = 0; i < size_t(max_coords); ++i) {
      size_t j = i + size_t(rng.uniform_int(0, int(coords.size() - i - 1)));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(size_t(max_coords));
  }

  auto eval_at = [&](const std::vector<double>& values) {
    TapeT<double> tape;
    TensorT<double> probe(x.shape(), values);
    return f(tape, probe).value();
  };

  GradCheckReport rep;
  std::vector<double> work = x.data();
  for (size_t i : coords) {
    const double orig = work[i];
    work[i] = orig + eps;
    const double fp = eval_at(work);
    work[i] = orig - eps;
    const double fm = eval_at(work);
    work[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[i];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
    const double rel = std::fabs(a - numeric) / denom;
    rep.max_rel_err = std::max(rep.max_rel_err, rel);
    ++rep.coords_checked;
  }
  return rep;
}

}  // namespace sgsln
