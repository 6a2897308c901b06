#include "mixvox/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>

namespace mixvox {

namespace {

struct FileCloser {
  void operator()(FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

uint8_t to_byte(float v) { return uint8_t(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)); }

void write_rows(const std::string& path, uint32_t width, uint32_t height, int color_type, int depth,
                const std::vector<uint8_t>& buf, size_t stride) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    FilePtr f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw LoadError("cannot open '" + path + "' for writing");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    std::vector<png_bytep> rows(height);
    for (uint32_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(buf.data() + y * stride);
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw LoadError("png encode failed for '" + path + "': " + err);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (depth == 16) png_set_swap(png);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

Image read_png(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw LoadError("cannot open image '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw LoadError("'" + path + "' is not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  Image img;
  std::vector<uint8_t> buf;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("cannot decode '" + path + "': " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const uint32_t w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int ct = png_get_color_type(png, info);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_packing(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_set_expand(png);
  png_set_swap(png);
  png_read_update_info(png, info);
  const int depth = png_get_bit_depth(png, info);
  const size_t stride = png_get_rowbytes(png, info);
  if (png_get_channels(png, info) != 3) throw LoadError("'" + path + "': unsupported channel layout");
  buf.resize(stride * h);
  rows.resize(h);
  for (uint32_t y = 0; y < h; ++y) rows[y] = buf.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(w, h);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w * 3; ++x) {
      float v;
      if (depth == 16) {
        uint16_t s;
        std::memcpy(&s, rows[y] + 2 * x, 2);
        v = float(s) / 65535.f;
      } else {
        v = float(rows[y][x]) / 255.f;
      }
      img.data[size_t(y) * w * 3 + x] = v;
    }
  return img;
}

void write_png(const std::string& path, const Image& img) {
  if (img.data.size() != img.pixel_count() * 3 || img.width == 0 || img.height == 0)
    throw DomainError("image buffer does not match its size");
  std::vector<uint8_t> buf(img.data.size());
  for (size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(img.data[i]);
  write_rows(path, img.width, img.height, PNG_COLOR_TYPE_RGB, 8, buf, size_t(img.width) * 3);
}

void write_png_gray16(const std::string& path, uint32_t width, uint32_t height, const std::vector<float>& values) {
  if (values.size() != size_t(width) * height || width == 0 || height == 0)
    throw DomainError("depth buffer does not match its size");
  std::vector<uint8_t> buf(values.size() * 2);
  for (size_t i = 0; i < values.size(); ++i) {
    const uint16_t s = uint16_t(std::lround(std::clamp(values[i], 0.f, 1.f) * 65535.f));
    std::memcpy(buf.data() + 2 * i, &s, 2);
  }
  write_rows(path, width, height, PNG_COLOR_TYPE_GRAY, 16, buf, size_t(width) * 2);
}

void quantize_8bit(Image& img) {
  for (float& v : img.data) v = float(to_byte(v)) / 255.f;
}

}  // namespace mixvox
