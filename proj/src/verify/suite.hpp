#pragma once

#include <string>
#include <vector>

namespace sgsln::verify {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Central-difference checks (64-bit, eps = 1e-5) covering every
// differentiable operation, every block, and a full width-16 EDED forward.
std::vector<GradCheckEntry> gradient_suite();

std::string render_gradient_report(const std::vector<GradCheckEntry>& entries);

bool all_pass(const std::vector<GradCheckEntry>& entries);
double suite_max_err(const std::vector<GradCheckEntry>& entries);

}  // namespace sgsln::verify
