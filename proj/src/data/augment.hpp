#pragma once

#include "data/synth.hpp"

namespace sgsln::data {

// Training-time augmentation. Geometric transforms apply identically to
// both epochs and the label (label via nearest neighbor, re-binarized);
// one photometric transform is drawn with p_photo and applied to each epoch
// with independent parameters; the temporal-order swap leaves the label
// untouched.
struct AugmentConfig {
  double p_flip = 0.5;  // horizontal
  double p_transpose = 0.5;
  double p_shift = 0.3;
  double shift_frac = 0.0625;
  double p_scale = 0.3;
  double scale_frac = 0.10;
  double p_rotate = 0.3;
  double rotate_deg = 45.0;
  double p_photo = 0.3;
  double brightness = 0.2, contrast = 0.2;
  double gamma_lo = 0.8, gamma_hi = 1.2;
  double noise_lo = 0.01, noise_hi = 0.05;
  double p_swap = 0.5;

  static AugmentConfig disabled() {
    AugmentConfig c;
    c.p_flip = c.p_transpose = c.p_shift = c.p_scale = c.p_rotate = c.p_photo = c.p_swap = 0.0;
    return c;
  }
};

SamplePair augment_pair(const SamplePair& s, const AugmentConfig& cfg, uint64_t seed);

}  // namespace sgsln::data
