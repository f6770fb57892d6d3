#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "data/augment.hpp"
#include "data/dataset.hpp"
#include "data/png_io.hpp"
#include "data/synth.hpp"

using namespace sgsln;
using namespace sgsln::data;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const char* tag) {
  fs::path p = fs::temp_directory_path() / (std::string("sgsln_data_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

double label_sum(const Raster& r) {
  double s = 0.0;
  for (float v : r.v) s += v;
  return s;
}

bool rasters_equal(const Raster& a, const Raster& b) {
  return a.c == b.c && a.h == b.h && a.w == b.w && a.v == b.v;
}

void check_binary(const Raster& label) {
  for (float v : label.v) CHECK((v == 0.0f || v == 1.0f));
}

}  // namespace

TEST_CASE("generation is deterministic per (spec, scenario, seed)") {
  SceneSpec spec;
  for (auto sc : {Scenario::iccd, Scenario::svbcd, Scenario::mvbcd}) {
    const SamplePair a = gen_scene(spec, sc, 42);
    const SamplePair b = gen_scene(spec, sc, 42);
    CHECK(rasters_equal(a.t1, b.t1));
    CHECK(rasters_equal(a.t2, b.t2));
    CHECK(rasters_equal(a.label, b.label));
    const SamplePair c = gen_scene(spec, sc, 43);
    CHECK(!rasters_equal(a.t1, c.t1));
    check_binary(a.label);
  }
}

TEST_CASE("zero change probability yields empty labels") {
  SceneSpec spec;
  spec.change_prob = 0.0;
  for (auto sc : {Scenario::iccd, Scenario::svbcd, Scenario::mvbcd}) {
    const SamplePair s = gen_scene(spec, sc, 7);
    CHECK(label_sum(s.label) == 0.0);
  }
}

TEST_CASE("multiview parallax is pseudo-change: displaced roofs, empty label") {
  SceneSpec spec;
  spec.change_prob = 0.0;
  spec.kappa = 1.0;
  spec.building_h_min = 4.0;  // displacement of at least 4 px
  const SamplePair s = gen_scene(spec, Scenario::mvbcd, 11);
  CHECK(label_sum(s.label) == 0.0);
  CHECK(!rasters_equal(s.t1, s.t2));  // the defining pseudo-change condition
}

TEST_CASE("zero parallax and zero change make the epochs identical") {
  SceneSpec spec;
  spec.change_prob = 0.0;
  spec.kappa = 0.0;
  const SamplePair s = gen_scene(spec, Scenario::mvbcd, 13);
  CHECK(rasters_equal(s.t1, s.t2));
}

TEST_CASE("iccd tint separates the epochs photometrically without labels") {
  SceneSpec spec;
  spec.change_prob = 0.0;
  const SamplePair s = gen_scene(spec, Scenario::iccd, 17);
  CHECK(label_sum(s.label) == 0.0);
  CHECK(!rasters_equal(s.t1, s.t2));
}

TEST_CASE("one changed 10x10 building marks exactly 100 pixels") {
  SceneSpec spec;
  spec.min_objects = spec.max_objects = 1;
  spec.obj_min_extent = spec.obj_max_extent = 10;
  spec.change_prob = 1.0;
  for (auto sc : {Scenario::svbcd, Scenario::mvbcd}) {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
      const SamplePair s = gen_scene(spec, sc, seed);
      CHECK(label_sum(s.label) == 100.0);
    }
  }
}

TEST_CASE("an overcrowded spec is rejected after bounded retries") {
  SceneSpec spec;
  spec.size = 32;
  spec.min_objects = spec.max_objects = 40;
  spec.obj_min_extent = spec.obj_max_extent = 10;
  CHECK_THROWS_WITH_AS(gen_scene(spec, Scenario::svbcd, 3), doctest::Contains("crowded"), Error);
  SceneSpec bad;
  bad.size = 33;
  CHECK_THROWS_AS(gen_scene(bad, Scenario::svbcd, 3), Error);
}

TEST_CASE("augmentation with all probabilities zero is the identity") {
  const SamplePair s = gen_scene(SceneSpec{}, Scenario::iccd, 23);
  const SamplePair out = augment_pair(s, AugmentConfig::disabled(), 99);
  CHECK(rasters_equal(out.t1, s.t1));
  CHECK(rasters_equal(out.t2, s.t2));
  CHECK(rasters_equal(out.label, s.label));
}

TEST_CASE("forced temporal swap exchanges the epochs and keeps the label") {
  const SamplePair s = gen_scene(SceneSpec{}, Scenario::svbcd, 29);
  AugmentConfig cfg = AugmentConfig::disabled();
  cfg.p_swap = 1.0;
  const SamplePair out = augment_pair(s, cfg, 1);
  CHECK(rasters_equal(out.t1, s.t2));
  CHECK(rasters_equal(out.t2, s.t1));
  CHECK(rasters_equal(out.label, s.label));
}

TEST_CASE("forced horizontal flip mirrors images and label in step") {
  const SamplePair s = gen_scene(SceneSpec{}, Scenario::svbcd, 31);
  AugmentConfig cfg = AugmentConfig::disabled();
  cfg.p_flip = 1.0;
  const SamplePair out = augment_pair(s, cfg, 2);
  const int w = s.label.w;
  for (int y = 0; y < s.label.h; ++y) {
    for (int x = 0; x < w; ++x) {
      CHECK(out.label.at(0, y, x) == s.label.at(0, y, w - 1 - x));
      CHECK(out.t1.at(1, y, x) == s.t1.at(1, y, w - 1 - x));
    }
  }
  // applying the flip twice restores the original exactly
  const SamplePair twice = augment_pair(out, cfg, 3);
  CHECK(rasters_equal(twice.t1, s.t1));
  CHECK(rasters_equal(twice.label, s.label));
}

TEST_CASE("forced transpose is an exact permutation") {
  const SamplePair s = gen_scene(SceneSpec{}, Scenario::iccd, 37);
  AugmentConfig cfg = AugmentConfig::disabled();
  cfg.p_transpose = 1.0;
  const SamplePair out = augment_pair(s, cfg, 4);
  for (int y = 0; y < s.label.h; ++y) {
    for (int x = 0; x < s.label.w; ++x) {
      CHECK(out.label.at(0, y, x) == s.label.at(0, x, y));
      CHECK(out.t2.at(0, y, x) == s.t2.at(0, x, y));
    }
  }
  const SamplePair twice = augment_pair(out, cfg, 5);
  CHECK(rasters_equal(twice.t2, s.t2));
}

TEST_CASE("geometric and photometric transforms keep labels binary") {
  AugmentConfig cfg;  // defaults: everything can fire
  for (uint64_t seed = 1; seed <= 12; ++seed) {
    const SamplePair s = gen_scene(SceneSpec{}, Scenario::svbcd, 100 + seed);
    const SamplePair out = augment_pair(s, cfg, seed);
    check_binary(out.label);
    for (float v : out.t1.v) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    // same seed reproduces the same augmentation
    const SamplePair again = augment_pair(s, cfg, seed);
    CHECK(rasters_equal(out.t1, again.t1));
    CHECK(rasters_equal(out.label, again.label));
  }
}

TEST_CASE("label downsampling is a 2x2 quadrant-or") {
  Raster ones(1, 4, 4, 1.0f);
  CHECK(label_sum(downsample_label(ones)) == 4.0);

  Raster single(1, 4, 4, 0.0f);
  single.at(0, 3, 1) = 1.0f;
  const Raster down = downsample_label(single);
  CHECK(label_sum(down) == 1.0);
  CHECK(down.at(0, 1, 0) == 1.0f);

  Rng rng(41);
  Raster mask(1, 8, 8, 0.0f);
  for (auto& v : mask.v) v = rng.bernoulli(0.3) ? 1.0f : 0.0f;
  const Raster d = downsample_label(mask);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      const bool any = mask.at(0, 2 * y, 2 * x) == 1.0f || mask.at(0, 2 * y, 2 * x + 1) == 1.0f ||
                       mask.at(0, 2 * y + 1, 2 * x) == 1.0f ||
                       mask.at(0, 2 * y + 1, 2 * x + 1) == 1.0f;
      CHECK(d.at(0, y, x) == (any ? 1.0f : 0.0f));
    }
  }
  CHECK_THROWS_AS(downsample_label(Raster(1, 5, 4, 0.0f)), Error);
}

TEST_CASE("tiling counts follow the stride grid") {
  CHECK(tile_count_1d(512, 256, 0) == 2);
  CHECK(tile_count_1d(512, 256, 128) == 3);
  Raster img(1, 512, 512, 0.0f);
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 512; ++x) img.at(0, y, x) = float(y * 512 + x);
  }
  CHECK(tile(img, 256, 0).size() == 4);
  const auto tiles = tile(img, 256, 128);
  CHECK(tiles.size() == 9);
  // tile (1,1) starts at (128,128)
  CHECK(tiles[4].at(0, 0, 0) == img.at(0, 128, 128));
  CHECK_THROWS_AS(tile(Raster(1, 128, 128, 0.0f), 256, 0), Error);
}

TEST_CASE("dataset split honors the 7:1:2 ratio and partitions the indices") {
  const auto split = split_indices(10, 0.7, 0.1, 0.2, 5);
  CHECK(split[0].size() == 7);
  CHECK(split[1].size() == 1);
  CHECK(split[2].size() == 2);
  std::set<int> all;
  for (const auto& bucket : split) all.insert(bucket.begin(), bucket.end());
  CHECK(all.size() == 10);
  CHECK_THROWS_WITH_AS(split_indices(10, 0.7, 0.1, 0.1, 5), doctest::Contains("sum to 1"), Error);
}

TEST_CASE("dataset write/read round trip up to 8-bit quantization") {
  const auto dir = temp_dir("roundtrip");
  std::vector<SamplePair> samples;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    samples.push_back(gen_scene(SceneSpec{}, Scenario::svbcd, seed));
  }
  write_dataset(dir.string(), samples, false);
  const auto back = read_dataset(dir.string());
  REQUIRE(back.size() == samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    CHECK(rasters_equal(back[i].label, samples[i].label));  // labels survive exactly
    REQUIRE(back[i].t1.numel() == samples[i].t1.numel());
    for (size_t j = 0; j < samples[i].t1.v.size(); ++j) {
      CHECK(std::fabs(back[i].t1.v[j] - samples[i].t1.v[j]) <= 0.5f / 255.0f + 1e-6f);
    }
  }
  // a second write without force is refused
  CHECK_THROWS_WITH_AS(write_dataset(dir.string(), samples, false), doctest::Contains("force"),
                       Error);
  write_dataset(dir.string(), samples, true);
}

TEST_CASE("labels outside {0,255} are rejected with the filename") {
  const auto dir = temp_dir("badlabel");
  std::vector<SamplePair> samples{gen_scene(SceneSpec{}, Scenario::svbcd, 1)};
  write_dataset(dir.string(), samples, false);
  PngImage gray;
  gray.width = gray.height = 64;
  gray.channels = 1;
  gray.pixels.assign(size_t(64) * 64, 128);
  write_png_file((dir / "label" / "00000.png").string(), gray);
  CHECK_THROWS_WITH_AS(read_dataset(dir.string()), doctest::Contains("00000.png"), Error);
}

TEST_CASE("a missing counterpart file is rejected, an empty root is not") {
  const auto dir = temp_dir("missing");
  std::vector<SamplePair> samples{gen_scene(SceneSpec{}, Scenario::svbcd, 2)};
  write_dataset(dir.string(), samples, false);
  fs::remove(dir / "B" / "00000.png");
  CHECK_THROWS_WITH_AS(read_dataset(dir.string()), doctest::Contains("missing counterpart"),
                       Error);

  const auto empty = temp_dir("empty");
  CHECK(read_dataset(empty.string()).empty());
}

TEST_CASE("png io round trips gray and rgb buffers") {
  const auto dir = temp_dir("png");
  PngImage img;
  img.width = 5;
  img.height = 3;
  img.channels = 3;
  img.pixels.resize(45);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = uint8_t(i * 5);
  const std::string path = (dir / "x.png").string();
  write_png_file(path, img);
  const PngImage back = read_png_file(path);
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  CHECK_THROWS_AS(read_png_file((dir / "absent.png").string()), Error);
}
