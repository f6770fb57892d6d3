#pragma once

#include <array>
#include <string>
#include <vector>

#include "data/png_io.hpp"
#include "data/synth.hpp"

namespace sgsln::data {

// On-disk layout: root/A/<id>.png, root/B/<id>.png, root/label/<id>.png.
// A/B are 8-bit RGB; labels are 8-bit grayscale restricted to {0,255}.

// Writes samples under zero-padded numeric ids. Refuses a non-empty target
// unless `force` is set.
void write_dataset(const std::string& root, const std::vector<SamplePair>& samples, bool force);

// Loads every sample (sorted by id). An existing-but-empty dataset yields an
// empty vector; missing counterpart files and label values outside {0,255}
// are rejected with the offending filename.
std::vector<SamplePair> read_dataset(const std::string& root);

// 2x2 max-pool of a binary mask to half resolution (thin changes survive).
Raster downsample_label(const Raster& label);

// Raster-order tiling with stride = tile - overlap; trailing remainders that
// cannot host a full tile are dropped.
std::vector<Raster> tile(const Raster& image, int tile_extent, int overlap);
int tile_count_1d(int extent, int tile_extent, int overlap);

// Seeded permutation split into train/val/test index sets; the ratios must
// sum to 1.
std::array<std::vector<int>, 3> split_indices(int count, double r_train, double r_val,
                                              double r_test, uint64_t seed);

// 8-bit quantization boundary helpers shared with the C API.
PngImage rgb_raster_to_png(const Raster& r);
PngImage label_raster_to_png(const Raster& r);
Raster png_to_rgb_raster(const PngImage& img);

}  // namespace sgsln::data
