#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace sgsln::data {

// Planar CHW float raster with values in [0,1].
struct Raster {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Raster() = default;
  Raster(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), v(size_t(c_) * h_ * w_, fill) {}

  float& at(int ch, int y, int x) { return v[(size_t(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return v[(size_t(ch) * h + y) * w + x]; }
  size_t numel() const { return v.size(); }
  bool same_extents(const Raster& o) const { return h == o.h && w == o.w; }
};

Tensor raster_to_tensor(const Raster& r);        // [C,H,W]
Raster tensor_to_raster(const Tensor& t);        // from [C,H,W] or [1,C,H,W]

enum class Scenario { iccd, svbcd, mvbcd };
Scenario scenario_from_string(const std::string& s);
std::string to_string(Scenario s);

constexpr int kGeneratorVersion = 1;

// Knobs of the scene generator. Defaults describe a lightly crowded 64x64
// canvas; acceptance runs use 128x128.
struct SceneSpec {
  int size = 64;  // canvas extent (square), divisible by 32
  int min_objects = 3, max_objects = 6;
  int obj_min_extent = 6, obj_max_extent = 0;  // footprint edge range; 0 -> size/4
  int palette_classes = 4;  // ICCD object classes
  double change_prob = 0.5;
  double building_h_min = 4.0, building_h_max = 12.0;
  double kappa = 0.5;                              // MVBCD roof displacement per height unit
  double shadow_dir_x = 1.0, shadow_dir_y = 1.0;   // SVBCD shadow direction
  double shadow_len = 0.8;                         // SVBCD shadow length per height unit
  int max_place_tries = 100;
};

struct SampleMeta {
  Scenario scenario = Scenario::svbcd;
  uint64_t seed = 0;
  int generator_version = kGeneratorVersion;
};

struct SamplePair {
  Raster t1, t2;  // rgb
  Raster label;   // single channel, values exactly 0 or 1
  SampleMeta meta;
};

// Deterministic scene synthesis: identical (spec, scenario, seed) yields a
// bit-identical sample.
//   iccd  - multi-class primitives appear/disappear/change class; a global
//           tint separates the epochs photometrically (tint is unlabeled).
//   svbcd - rectangular buildings with drop shadows; additions/removals are
//           labeled by roof footprint, shadows never are.
//   mvbcd - identical buildings, but epoch-2 roofs are displaced by
//           round(kappa*height) pixels; only true additions/removals are
//           labeled, never the parallax displacement.
SamplePair gen_scene(const SceneSpec& spec, Scenario scenario, uint64_t seed);

}  // namespace sgsln::data
