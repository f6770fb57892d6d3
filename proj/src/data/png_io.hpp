#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sgsln::data {

// 8-bit interleaved pixel buffer; channels is 1 (gray) or 3 (rgb).
struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> pixels;
};

// Reads any 8/16-bit gray/palette/rgb(a) PNG and normalizes it to 8-bit
// gray or rgb (alpha stripped, palette expanded, 16-bit narrowed).
PngImage read_png_file(const std::string& path);

void write_png_file(const std::string& path, const PngImage& img);

}  // namespace sgsln::data
