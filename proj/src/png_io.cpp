#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>

#include "texsyn/error.hpp"
#include "texsyn/grid.hpp"

namespace texsyn {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* buf = static_cast<std::string*>(png_get_error_ptr(png));
  if (buf) *buf = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

constexpr int kPngThreshold = 127;

}  // namespace

TextureGrid read_png(const std::filesystem::path& path) {
  const std::string where = path.string() + ": ";
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError(where + "cannot open file");

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(where + "not a PNG file");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw FormatError(where + "libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError(where + "libpng initialization failed");
  }

  int width = 0, height = 0, bit_depth = 0, color_type = 0;
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(where + "PNG decode failed: " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(where + "unsupported bit depth " + std::to_string(bit_depth) +
                      " / color type " + std::to_string(color_type) +
                      " (expected 8-bit grayscale)");
  }
  pixels.resize(static_cast<std::size_t>(width) * height);
  rows.resize(height);
  for (int r = 0; r < height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> data(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) data[i] = pixels[i] > kPngThreshold ? 1.0f : 0.0f;
  return TextureGrid({height, width}, std::move(data), ValueDomain::Binary01);
}

void write_png(const TextureGrid& grid, const std::filesystem::path& path) {
  if (grid.domain() != ValueDomain::Binary01) throw DomainError("PNG stores Binary01 grids only");
  if (grid.ndim() != 2) throw FormatError("PNG output requires a 2D grid; use .sgrd for 3D");
  const int height = grid.dims()[0];
  const int width = grid.dims()[1];

  std::vector<png_byte> pixels(grid.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = grid[i] != 0.0f ? 255 : 0;
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * width;

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error(path.string() + ": cannot open for writing");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!png) throw Error("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(path.string() + ": PNG encode failed: " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(fp.get()) != 0) throw Error(path.string() + ": write failed");
}

}  // namespace texsyn
