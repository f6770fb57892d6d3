#include "data/synth.hpp"

#include <algorithm>
#include <cmath>

namespace sgsln::data {

Tensor raster_to_tensor(const Raster& r) {
  return Tensor({r.c, r.h, r.w}, std::vector<float>(r.v));
}

Raster tensor_to_raster(const Tensor& t) {
  check(t.rank() == 3 || (t.rank() == 4 && t.dim(0) == 1),
        "tensor_to_raster: expected [C,H,W] or [1,C,H,W], got ", shape_str(t.shape()));
  const int off = t.rank() == 4 ? 1 : 0;
  Raster r(t.dim(off), t.dim(off + 1), t.dim(off + 2));
  std::copy(t.data().begin(), t.data().end(), r.v.begin());
  return r;
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "iccd" || s == "ICCD") return Scenario::iccd;
  if (s == "svbcd" || s == "SVBCD") return Scenario::svbcd;
  if (s == "mvbcd" || s == "MVBCD") return Scenario::mvbcd;
  fail("unknown scenario '", s, "' (expected iccd, svbcd, or mvbcd)");
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::iccd: return "iccd";
    case Scenario::svbcd: return "svbcd";
    case Scenario::mvbcd: return "mvbcd";
  }
  fail("invalid scenario value");
}

namespace {

struct Rect {
  int x0 = 0, y0 = 0, w = 0, h = 0;
  int x1() const { return x0 + w; }
  int y1() const { return y0 + h; }
  bool overlaps(const Rect& o) const {
    return x0 < o.x1() && o.x0 < x1() && y0 < o.y1() && o.y0 < y1();
  }
  Rect translated(int dx, int dy) const { return {x0 + dx, y0 + dy, w, h}; }
  Rect union_with(const Rect& o) const {
    const int nx0 = std::min(x0, o.x0), ny0 = std::min(y0, o.y0);
    return {nx0, ny0, std::max(x1(), o.x1()) - nx0, std::max(y1(), o.y1()) - ny0};
  }
  Rect padded(int m) const { return {x0 - m, y0 - m, w + 2 * m, h + 2 * m}; }
};

enum class ShapeKind { rect, ellipse, band };

// Visits every footprint pixel of the shape, clipped to the canvas.
template <class Fn>
void for_each_pixel(ShapeKind kind, const Rect& r, int size, Fn&& fn) {
  const double cx = r.x0 + r.w / 2.0, cy = r.y0 + r.h / 2.0;
  const double a = r.w / 2.0, b = r.h / 2.0;
  for (int y = std::max(0, r.y0); y < std::min(size, r.y1()); ++y) {
    for (int x = std::max(0, r.x0); x < std::min(size, r.x1()); ++x) {
      if (kind == ShapeKind::ellipse) {
        const double dx = (x + 0.5 - cx) / a, dy = (y + 0.5 - cy) / b;
        if (dx * dx + dy * dy > 1.0) continue;
      }
      fn(y, x);
    }
  }
}

Raster make_background(int size, Rng& rng) {
  const int cell = 8;
  const int nodes = size / cell + 1;
  const float base[3] = {0.42f, 0.46f, 0.40f};
  std::vector<float> grid(size_t(3) * nodes * nodes);
  for (int ch = 0; ch < 3; ++ch) {
    for (int i = 0; i < nodes * nodes; ++i) {
      grid[size_t(ch) * nodes * nodes + i] = base[ch] + float(rng.uniform(-0.12, 0.12));
    }
  }
  Raster bg(3, size, size);
  for (int ch = 0; ch < 3; ++ch) {
    const float* g = grid.data() + size_t(ch) * nodes * nodes;
    for (int y = 0; y < size; ++y) {
      const int gy = y / cell;
      const float fy = float(y % cell) / cell;
      for (int x = 0; x < size; ++x) {
        const int gx = x / cell;
        const float fx = float(x % cell) / cell;
        const float v00 = g[gy * nodes + gx], v01 = g[gy * nodes + gx + 1];
        const float v10 = g[(gy + 1) * nodes + gx], v11 = g[(gy + 1) * nodes + gx + 1];
        bg.at(ch, y, x) =
            (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  }
  // Shared fine-grain noise, drawn once so both epochs carry it identically.
  for (auto& v : bg.v) v += float(rng.normal(0.0, 0.012));
  return bg;
}

void clamp01(Raster& r) {
  for (auto& v : r.v) v = std::clamp(v, 0.0f, 1.0f);
}

// Object footprint placement with a one-pixel separation margin; fails when
// the canvas cannot host the requested objects.
class Placer {
 public:
  Placer(int size, int tries) : size_(size), tries_(tries) {}

  Rect place(Rng& rng, int w, int h, int reserve_dx = 0, int reserve_dy = 0) {
    // The reserved displacement keeps both the base and the translated
    // footprint inside the canvas (multiview roofs).
    const int max_x = size_ - w - std::max(0, reserve_dx);
    const int max_y = size_ - h - std::max(0, reserve_dy);
    const int min_x = std::max(0, -reserve_dx);
    const int min_y = std::max(0, -reserve_dy);
    check(max_x >= min_x && max_y >= min_y, "scene generation: object ", w, "x", h,
          " with displacement ", reserve_dx, ",", reserve_dy, " cannot fit a ", size_, "x", size_,
          " canvas");
    for (int t = 0; t < tries_; ++t) {
      Rect r{min_x + rng.uniform_int(0, max_x - min_x), min_y + rng.uniform_int(0, max_y - min_y),
             w, h};
      Rect claim = r.union_with(r.translated(reserve_dx, reserve_dy)).padded(1);
      bool free = true;
      for (const Rect& c : claimed_) {
        if (claim.overlaps(c)) {
          free = false;
          break;
        }
      }
      if (free) {
        claimed_.push_back(claim);
        return r;
      }
    }
    fail("scene generation: placement failed after ", tries_,
         " tries; the scene spec is too crowded");
  }

 private:
  int size_;
  int tries_;
  std::vector<Rect> claimed_;
};

struct ClassStyle {
  float color[3];
};

// Distinct fill palette for ICCD classes; cycled when more classes are asked
// for. The texture style is derived from the class index.
constexpr ClassStyle kPalette[] = {
    {{0.70f, 0.26f, 0.22f}},
    {{0.22f, 0.32f, 0.68f}},
    {{0.72f, 0.68f, 0.24f}},
    {{0.56f, 0.56f, 0.58f}},
    {{0.30f, 0.58f, 0.30f}},
    {{0.58f, 0.34f, 0.62f}},
};
constexpr int kPaletteSize = int(sizeof(kPalette) / sizeof(kPalette[0]));

float textured(int cls, int y, int x, int ch, float jitter) {
  const ClassStyle& st = kPalette[cls % kPaletteSize];
  float v = st.color[ch] + jitter;
  switch (cls % 3) {
    case 1:  // stripes
      v += ((y / 2) % 2 == 0) ? 0.06f : -0.06f;
      break;
    case 2:  // dots
      if (y % 4 < 2 && x % 4 < 2) v += 0.10f;
      break;
    default:
      break;
  }
  return v;
}

void draw_object(Raster& img, ShapeKind kind, const Rect& r, int cls, float jitter, int size) {
  for_each_pixel(kind, r, size, [&](int y, int x) {
    for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = textured(cls, y, x, ch, jitter);
  });
}

void mark_label(Raster& label, ShapeKind kind, const Rect& r, int size) {
  for_each_pixel(kind, r, size, [&](int y, int x) { label.at(0, y, x) = 1.0f; });
}

void darken_rect(Raster& img, const Rect& r, int size, float factor) {
  for_each_pixel(ShapeKind::rect, r, size, [&](int y, int x) {
    for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) *= factor;
  });
}

int object_extent(const SceneSpec& spec, Rng& rng) {
  const int lo = std::max(2, spec.obj_min_extent);
  int hi = spec.obj_max_extent > 0 ? spec.obj_max_extent : std::max(lo, spec.size / 4);
  hi = std::max(lo, hi);
  return rng.uniform_int(lo, hi);
}

// change kinds
constexpr int kPersist = 0;
constexpr int kAppear = 1;
constexpr int kDisappear = 2;
constexpr int kClassChange = 3;

void gen_iccd(const SceneSpec& spec, Rng& rng, SamplePair& out) {
  const int size = spec.size;
  Placer placer(size, spec.max_place_tries);
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int i = 0; i < count; ++i) {
    const ShapeKind kind = ShapeKind(rng.uniform_int(0, 2));
    int w = object_extent(spec, rng);
    int h = object_extent(spec, rng);
    if (kind == ShapeKind::band) {
      w = std::min(size - 2, w * 3);
      h = std::max(2, h / 2);
    }
    const int cls = rng.uniform_int(0, std::max(1, spec.palette_classes) - 1);
    int cls2 = cls;
    int change = kPersist;
    if (rng.bernoulli(spec.change_prob)) {
      change = rng.uniform_int(kAppear, kClassChange);
      if (change == kClassChange) {
        cls2 = (cls + 1 + rng.uniform_int(0, std::max(2, spec.palette_classes) - 2)) %
               std::max(2, spec.palette_classes);
      }
    }
    const float jitter = float(rng.uniform(-0.04, 0.04));
    const Rect r = placer.place(rng, w, h);
    if (change != kAppear) draw_object(out.t1, kind, r, cls, jitter, size);
    if (change != kDisappear) {
      draw_object(out.t2, kind, r, change == kClassChange ? cls2 : cls, jitter, size);
    }
    if (change != kPersist) mark_label(out.label, kind, r, size);
  }
  // Global photometric tint per epoch; a pseudo-change, so never labeled.
  float tint1[3], tint2[3];
  for (int ch = 0; ch < 3; ++ch) tint1[ch] = float(rng.uniform(0.9, 1.1));
  for (int ch = 0; ch < 3; ++ch) tint2[ch] = float(rng.uniform(0.9, 1.1));
  for (int ch = 0; ch < 3; ++ch) {
    float* p1 = out.t1.v.data() + size_t(ch) * size * size;
    float* p2 = out.t2.v.data() + size_t(ch) * size * size;
    for (size_t i = 0; i < size_t(size) * size; ++i) {
      p1[i] *= tint1[ch];
      p2[i] *= tint2[ch];
    }
  }
}

struct Building {
  Rect roof;
  double height = 0;
  int change = kPersist;  // persist / appear / disappear
  float tone = 0;
};

Building sample_building(const SceneSpec& spec, Rng& rng) {
  Building b;
  b.roof.w = 0;  // placed later
  b.height = rng.uniform(spec.building_h_min, spec.building_h_max);
  b.change = rng.bernoulli(spec.change_prob) ? rng.uniform_int(kAppear, kDisappear) : kPersist;
  b.tone = float(rng.uniform(0.62, 0.85));
  return b;
}

void draw_roof(Raster& img, const Building& b, const Rect& at, int size) {
  for_each_pixel(ShapeKind::rect, at, size, [&](int y, int x) {
    const float edge = (y == at.y0 || x == at.x0 || y == at.y1() - 1 || x == at.x1() - 1)
                           ? -0.08f
                           : 0.0f;
    img.at(0, y, x) = b.tone + edge;
    img.at(1, y, x) = b.tone - 0.03f + edge;
    img.at(2, y, x) = b.tone - 0.05f + edge;
  });
}

void gen_svbcd(const SceneSpec& spec, Rng& rng, SamplePair& out) {
  const int size = spec.size;
  Placer placer(size, spec.max_place_tries);
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  const double dn = std::hypot(spec.shadow_dir_x, spec.shadow_dir_y);
  const double dx = dn > 0 ? spec.shadow_dir_x / dn : 0.0;
  const double dy = dn > 0 ? spec.shadow_dir_y / dn : 0.0;

  std::vector<Building> buildings;
  for (int i = 0; i < count; ++i) {
    Building b = sample_building(spec, rng);
    const int w = object_extent(spec, rng);
    const int h = object_extent(spec, rng);
    b.roof = placer.place(rng, w, h);
    buildings.push_back(b);
  }
  // Shadows first so roofs occlude them.
  for (const Building& b : buildings) {
    const int sx = int(std::lround(dx * spec.shadow_len * b.height));
    const int sy = int(std::lround(dy * spec.shadow_len * b.height));
    const Rect sh = b.roof.translated(sx, sy);
    if (b.change != kAppear) darken_rect(out.t1, sh, size, 0.45f);
    if (b.change != kDisappear) darken_rect(out.t2, sh, size, 0.45f);
  }
  for (const Building& b : buildings) {
    if (b.change != kAppear) draw_roof(out.t1, b, b.roof, size);
    if (b.change != kDisappear) draw_roof(out.t2, b, b.roof, size);
    if (b.change != kPersist) mark_label(out.label, ShapeKind::rect, b.roof, size);
  }
}

void gen_mvbcd(const SceneSpec& spec, Rng& rng, SamplePair& out) {
  const int size = spec.size;
  Placer placer(size, spec.max_place_tries);
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int i = 0; i < count; ++i) {
    Building b = sample_building(spec, rng);
    const int w = object_extent(spec, rng);
    const int h = object_extent(spec, rng);
    // Epoch-2 roofs shift along the fixed parallax direction (+x) by an
    // amount proportional to building height.
    const int disp = int(std::lround(spec.kappa * b.height));
    b.roof = placer.place(rng, w, h, disp, 0);
    const Rect displaced = b.roof.translated(disp, 0);
    if (b.change != kAppear) draw_roof(out.t1, b, b.roof, size);
    if (b.change != kDisappear) draw_roof(out.t2, b, displaced, size);
    if (b.change == kAppear) mark_label(out.label, ShapeKind::rect, displaced, size);
    if (b.change == kDisappear) mark_label(out.label, ShapeKind::rect, b.roof, size);
  }
}

}  // namespace

SamplePair gen_scene(const SceneSpec& spec, Scenario scenario, uint64_t seed) {
  check(spec.size >= 32 && spec.size % 32 == 0, "scene spec: canvas extent ", spec.size,
        " must be a positive multiple of 32");
  check(spec.min_objects >= 0 && spec.max_objects >= spec.min_objects,
        "scene spec: invalid object count range [", spec.min_objects, ", ", spec.max_objects, "]");
  check(spec.kappa >= 0.0, "scene spec: kappa must be non-negative, got ", spec.kappa);
  check(spec.change_prob >= 0.0 && spec.change_prob <= 1.0,
        "scene spec: change probability must lie in [0,1], got ", spec.change_prob);

  Rng rng(mix_seed(seed, 0x5ce0e0 + uint64_t(scenario)));
  SamplePair out;
  out.meta = SampleMeta{scenario, seed, kGeneratorVersion};
  out.t1 = make_background(spec.size, rng);
  out.t2 = out.t1;  // shared background and noise
  out.label = Raster(1, spec.size, spec.size, 0.0f);

  switch (scenario) {
    case Scenario::iccd: gen_iccd(spec, rng, out); break;
    case Scenario::svbcd: gen_svbcd(spec, rng, out); break;
    case Scenario::mvbcd: gen_mvbcd(spec, rng, out); break;
  }
  clamp01(out.t1);
  clamp01(out.t2);
  return out;
}

}  // namespace sgsln::data
