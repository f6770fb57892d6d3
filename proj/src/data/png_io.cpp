#include "data/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "core/error.hpp"

namespace sgsln::data {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

PngImage read_png_file(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  check(fp != nullptr, "png: cannot open '", path, "'");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail("png: out of memory");
  }
  std::vector<png_bytep> rows;
  PngImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("png: failed to decode '", path, "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (bit_depth == 16) png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.channels = int(png_get_channels(png, info));
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail("png: '", path, "' decodes to ", img.channels, " channels; expected gray or rgb");
  }
  img.pixels.resize(size_t(img.width) * img.height * img.channels);
  rows.resize(size_t(img.height));
  const size_t stride = size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) rows[size_t(y)] = img.pixels.data() + size_t(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png_file(const std::string& path, const PngImage& img) {
  check(img.channels == 1 || img.channels == 3, "png: unsupported channel count ", img.channels);
  check(img.width > 0 && img.height > 0, "png: empty image");
  check(img.pixels.size() == size_t(img.width) * img.height * img.channels,
        "png: pixel buffer does not match extents");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  check(fp != nullptr, "png: cannot open '", path, "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  check(png != nullptr, "png: out of memory");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail("png: out of memory");
  }
  std::vector<png_bytep> rows(size_t(img.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail("png: failed to write '", path, "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const size_t stride = size_t(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    rows[size_t(y)] = const_cast<png_bytep>(img.pixels.data() + size_t(y) * stride);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace sgsln::data
