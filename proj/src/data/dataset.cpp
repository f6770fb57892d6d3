#include "data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace sgsln::data {

namespace fs = std::filesystem;

PngImage rgb_raster_to_png(const Raster& r) {
  check(r.c == 3, "dataset: expected a 3-channel raster, got ", r.c);
  PngImage img;
  img.width = r.w;
  img.height = r.h;
  img.channels = 3;
  img.pixels.resize(size_t(r.w) * r.h * 3);
  for (int y = 0; y < r.h; ++y) {
    for (int x = 0; x < r.w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        const float v = std::clamp(r.at(ch, y, x), 0.0f, 1.0f);
        img.pixels[(size_t(y) * r.w + x) * 3 + ch] = uint8_t(std::lround(v * 255.0f));
      }
    }
  }
  return img;
}

PngImage label_raster_to_png(const Raster& r) {
  check(r.c == 1, "dataset: expected a 1-channel label raster, got ", r.c);
  PngImage img;
  img.width = r.w;
  img.height = r.h;
  img.channels = 1;
  img.pixels.resize(size_t(r.w) * r.h);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    check(r.v[i] == 0.0f || r.v[i] == 1.0f, "dataset: label raster is not binary");
    img.pixels[i] = r.v[i] == 1.0f ? 255 : 0;
  }
  return img;
}

Raster png_to_rgb_raster(const PngImage& img) {
  Raster r(3, img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        const uint8_t b = img.channels == 1 ? img.pixels[size_t(y) * img.width + x]
                                            : img.pixels[(size_t(y) * img.width + x) * 3 + ch];
        r.at(ch, y, x) = float(b) / 255.0f;
      }
    }
  }
  return r;
}

namespace {

std::string sample_id(int index) {
  std::string s = std::to_string(index);
  return std::string(5 - std::min<size_t>(5, s.size()), '0') + s;
}

Raster read_label_png(const std::string& path) {
  const PngImage img = read_png_file(path);
  check(img.channels == 1, "dataset: label '", path, "' must be 8-bit grayscale");
  Raster r(1, img.height, img.width);
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    const uint8_t b = img.pixels[i];
    check(b == 0 || b == 255, "dataset: label '", path, "' contains value ", int(b),
          " outside {0,255}");
    r.v[i] = b == 255 ? 1.0f : 0.0f;
  }
  return r;
}

}  // namespace

void write_dataset(const std::string& root, const std::vector<SamplePair>& samples, bool force) {
  const fs::path rp(root);
  if (fs::exists(rp) && !fs::is_empty(rp)) {
    check(force, "dataset: output directory '", root, "' is not empty (use force to overwrite)");
  }
  fs::create_directories(rp / "A");
  fs::create_directories(rp / "B");
  fs::create_directories(rp / "label");
  for (size_t i = 0; i < samples.size(); ++i) {
    const std::string id = sample_id(int(i));
    write_png_file((rp / "A" / (id + ".png")).string(), rgb_raster_to_png(samples[i].t1));
    write_png_file((rp / "B" / (id + ".png")).string(), rgb_raster_to_png(samples[i].t2));
    write_png_file((rp / "label" / (id + ".png")).string(), label_raster_to_png(samples[i].label));
  }
}

std::vector<SamplePair> read_dataset(const std::string& root) {
  const fs::path rp(root);
  check(fs::is_directory(rp), "dataset: '", root, "' is not a directory");
  const fs::path adir = rp / "A";
  std::vector<std::string> ids;
  if (fs::is_directory(adir)) {
    for (const auto& entry : fs::directory_iterator(adir)) {
      if (entry.path().extension() == ".png") ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  std::vector<SamplePair> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const std::string a_path = (adir / (id + ".png")).string();
    const std::string b_path = (rp / "B" / (id + ".png")).string();
    const std::string l_path = (rp / "label" / (id + ".png")).string();
    check(fs::exists(b_path), "dataset: missing counterpart '", b_path, "' for '", a_path, "'");
    check(fs::exists(l_path), "dataset: missing label '", l_path, "' for '", a_path, "'");
    SamplePair s;
    s.t1 = png_to_rgb_raster(read_png_file(a_path));
    s.t2 = png_to_rgb_raster(read_png_file(b_path));
    s.label = read_label_png(l_path);
    check(s.t1.same_extents(s.t2) && s.t1.same_extents(s.label),
          "dataset: extents disagree across A/B/label for id '", id, "'");
    out.push_back(std::move(s));
  }
  return out;
}

Raster downsample_label(const Raster& label) {
  check(label.c == 1, "downsample_label: expected a single-channel mask, got ", label.c);
  check(label.h % 2 == 0 && label.w % 2 == 0, "downsample_label: extents ", label.h, "x",
        label.w, " must be even");
  Raster out(1, label.h / 2, label.w / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const float m = std::max(std::max(label.at(0, 2 * y, 2 * x), label.at(0, 2 * y, 2 * x + 1)),
                               std::max(label.at(0, 2 * y + 1, 2 * x),
                                        label.at(0, 2 * y + 1, 2 * x + 1)));
      out.at(0, y, x) = m >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

int tile_count_1d(int extent, int tile_extent, int overlap) {
  check(tile_extent >= 1 && overlap >= 0 && overlap < tile_extent,
        "tile: invalid tile/overlap pair ", tile_extent, "/", overlap);
  check(extent >= tile_extent, "tile: image extent ", extent, " is smaller than the tile ",
        tile_extent);
  const int stride = tile_extent - overlap;
  return (extent - tile_extent) / stride + 1;
}

std::vector<Raster> tile(const Raster& image, int tile_extent, int overlap) {
  const int ny = tile_count_1d(image.h, tile_extent, overlap);
  const int nx = tile_count_1d(image.w, tile_extent, overlap);
  const int stride = tile_extent - overlap;
  std::vector<Raster> out;
  out.reserve(size_t(ny) * nx);
  for (int ty = 0; ty < ny; ++ty) {
    for (int tx = 0; tx < nx; ++tx) {
      Raster t(image.c, tile_extent, tile_extent);
      for (int ch = 0; ch < image.c; ++ch) {
        for (int y = 0; y < tile_extent; ++y) {
          for (int x = 0; x < tile_extent; ++x) {
            t.at(ch, y, x) = image.at(ch, ty * stride + y, tx * stride + x);
          }
        }
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::array<std::vector<int>, 3> split_indices(int count, double r_train, double r_val,
                                              double r_test, uint64_t seed) {
  check(count >= 0, "split: negative count");
  check(r_train >= 0 && r_val >= 0 && r_test >= 0, "split: negative ratio");
  check(std::fabs(r_train + r_val + r_test - 1.0) < 1e-9, "split: ratios ", r_train, "+", r_val,
        "+", r_test, " do not sum to 1");
  std::vector<int> perm(static_cast<size_t>(count), 0);
  for (int i = 0; i < count; ++i) perm[size_t(i)] = i;
  Rng rng(mix_seed(seed, 0x5b117));
  for (int i = count - 1; i > 0; --i) {
    std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(0, i))]);
  }
  // Largest-remainder apportionment of the three bucket sizes.
  const double exact[3] = {count * r_train, count * r_val, count * r_test};
  int sizes[3];
  double frac[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    sizes[i] = int(std::floor(exact[i]));
    frac[i] = exact[i] - sizes[i];
    assigned += sizes[i];
  }
  while (assigned < count) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (frac[i] > frac[best]) best = i;
    }
    ++sizes[best];
    frac[best] = -1;
    ++assigned;
  }
  std::array<std::vector<int>, 3> out;
  int pos = 0;
  for (int b = 0; b < 3; ++b) {
    out[size_t(b)].assign(perm.begin() + pos, perm.begin() + pos + sizes[b]);
    pos += sizes[b];
  }
  return out;
}

}  // namespace sgsln::data
