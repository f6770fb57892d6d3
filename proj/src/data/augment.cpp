#include "data/augment.hpp"

#include <algorithm>
#include <cmath>

namespace sgsln::data {

namespace {

// reflect-101 border handling (mirror without repeating the edge pixel).
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

Raster flip_h(const Raster& r) {
  Raster out(r.c, r.h, r.w);
  for (int ch = 0; ch < r.c; ++ch) {
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) out.at(ch, y, x) = r.at(ch, y, r.w - 1 - x);
    }
  }
  return out;
}

Raster transpose(const Raster& r) {
  Raster out(r.c, r.w, r.h);
  for (int ch = 0; ch < r.c; ++ch) {
    for (int y = 0; y < r.h; ++y) {
      for (int x = 0; x < r.w; ++x) out.at(ch, x, y) = r.at(ch, y, x);
    }
  }
  return out;
}

struct Affine {
  double angle_rad = 0.0;
  double scale = 1.0;
  double dx = 0.0, dy = 0.0;
  bool identity() const { return angle_rad == 0.0 && scale == 1.0 && dx == 0.0 && dy == 0.0; }
};

// Inverse-mapped resampling about the raster center with reflection padding.
Raster warp(const Raster& r, const Affine& a, bool nearest) {
  Raster out(r.c, r.h, r.w);
  const double cx = (r.w - 1) / 2.0, cy = (r.h - 1) / 2.0;
  const double cs = std::cos(a.angle_rad), sn = std::sin(a.angle_rad);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      const double u = x - cx - a.dx;
      const double v = y - cy - a.dy;
      const double sx = cx + (cs * u + sn * v) / a.scale;
      const double sy = cy + (-sn * u + cs * v) / a.scale;
      if (nearest) {
        const int ix = reflect(int(std::lround(sx)), r.w);
        const int iy = reflect(int(std::lround(sy)), r.h);
        for (int ch = 0; ch < r.c; ++ch) out.at(ch, y, x) = r.at(ch, iy, ix);
      } else {
        const double fxf = std::floor(sx), fyf = std::floor(sy);
        const double fx = sx - fxf, fy = sy - fyf;
        const int x0 = reflect(int(fxf), r.w), x1 = reflect(int(fxf) + 1, r.w);
        const int y0 = reflect(int(fyf), r.h), y1 = reflect(int(fyf) + 1, r.h);
        for (int ch = 0; ch < r.c; ++ch) {
          const double v00 = r.at(ch, y0, x0), v01 = r.at(ch, y0, x1);
          const double v10 = r.at(ch, y1, x0), v11 = r.at(ch, y1, x1);
          out.at(ch, y, x) = float((1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                   fy * ((1 - fx) * v10 + fx * v11));
        }
      }
    }
  }
  return out;
}

void clamp01(Raster& r) {
  for (auto& v : r.v) v = std::clamp(v, 0.0f, 1.0f);
}

void apply_photometric(Raster& img, int kind, const AugmentConfig& cfg, Rng& rng) {
  switch (kind) {
    case 0: {  // brightness / contrast
      const float b = float(rng.uniform(-cfg.brightness, cfg.brightness));
      const float c = float(rng.uniform(-cfg.contrast, cfg.contrast));
      for (auto& v : img.v) v = (v - 0.5f) * (1.0f + c) + 0.5f + b;
      break;
    }
    case 1: {  // gamma
      const float g = float(rng.uniform(cfg.gamma_lo, cfg.gamma_hi));
      for (auto& v : img.v) v = std::pow(std::max(v, 0.0f), g);
      break;
    }
    default: {  // additive gaussian noise
      const double sigma = rng.uniform(cfg.noise_lo, cfg.noise_hi);
      for (auto& v : img.v) v += float(rng.normal(0.0, sigma));
      break;
    }
  }
  clamp01(img);
}

}  // namespace

SamplePair augment_pair(const SamplePair& s, const AugmentConfig& cfg, uint64_t seed) {
  check(s.t1.same_extents(s.t2) && s.t1.same_extents(s.label),
        "augment: sample rasters disagree on extents");
  Rng rng(mix_seed(seed, 0xa06));
  SamplePair out = s;

  if (rng.bernoulli(cfg.p_flip)) {
    out.t1 = flip_h(out.t1);
    out.t2 = flip_h(out.t2);
    out.label = flip_h(out.label);
  }
  if (rng.bernoulli(cfg.p_transpose)) {
    check(out.t1.h == out.t1.w, "augment: transpose requires square rasters, got ", out.t1.h,
          "x", out.t1.w);
    out.t1 = transpose(out.t1);
    out.t2 = transpose(out.t2);
    out.label = transpose(out.label);
  }

  Affine aff;
  if (rng.bernoulli(cfg.p_shift)) {
    aff.dx = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * out.t1.w;
    aff.dy = rng.uniform(-cfg.shift_frac, cfg.shift_frac) * out.t1.h;
  }
  if (rng.bernoulli(cfg.p_scale)) {
    aff.scale = 1.0 + rng.uniform(-cfg.scale_frac, cfg.scale_frac);
  }
  if (rng.bernoulli(cfg.p_rotate)) {
    aff.angle_rad = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg) * 3.14159265358979323846 / 180.0;
  }
  if (!aff.identity()) {
    out.t1 = warp(out.t1, aff, false);
    out.t2 = warp(out.t2, aff, false);
    out.label = warp(out.label, aff, true);
    clamp01(out.t1);
    clamp01(out.t2);
  }

  if (rng.bernoulli(cfg.p_photo)) {
    const int kind = rng.uniform_int(0, 2);
    apply_photometric(out.t1, kind, cfg, rng);
    apply_photometric(out.t2, kind, cfg, rng);
  }

  if (rng.bernoulli(cfg.p_swap)) std::swap(out.t1, out.t2);

  for (auto& v : out.label.v) v = v >= 0.5f ? 1.0f : 0.0f;
  return out;
}

}  // namespace sgsln::data
