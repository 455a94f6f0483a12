#pragma once

// PNG support through libpng; link against PNG::PNG when including this header.

#include <png.h>

#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "fishloc/error.hpp"
#include "fishloc/image.hpp"

namespace fishloc {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) != suffix[i]) return false;
  }
  return true;
}

inline void write_png_rows(const std::string& path, int width, int height, int color_type,
                           const std::vector<png_bytep>& rows) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("cannot write image '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("failed writing PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace detail

/// Reads an 8-bit PNG, converting color/alpha/16-bit inputs to 8-bit gray.
inline GrayImage read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("cannot open image '" + path + "'");
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw InputError("'" + path + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  GrayImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("corrupt PNG '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color_type = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA || color_type == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  img = GrayImage(w, h);
  rows.resize(h);
  for (int v = 0; v < h; ++v) rows[v] = &img.at(0, v);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline void write_png(const GrayImage& img, const std::string& path) {
  std::vector<png_bytep> rows(img.height());
  auto& data = const_cast<GrayImage&>(img).data();
  for (int v = 0; v < img.height(); ++v) rows[v] = data.data() + static_cast<std::size_t>(v) * img.width();
  detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_GRAY, rows);
}

inline void write_png(const RgbImage& img, const std::string& path) {
  std::vector<png_bytep> rows(img.height());
  for (int v = 0; v < img.height(); ++v) {
    rows[v] = reinterpret_cast<png_bytep>(const_cast<Rgb*>(&img.at(0, v)));
  }
  detail::write_png_rows(path, img.width(), img.height(), PNG_COLOR_TYPE_RGB, rows);
}

/// Loads a grayscale image, picking the decoder from the file extension.
inline GrayImage load_gray_image(const std::string& path) {
  if (detail::has_suffix(path, ".png")) return read_png(path);
  if (detail::has_suffix(path, ".pgm")) return read_pgm(path);
  throw InputError("unsupported image format '" + path + "' (expected .png or .pgm)");
}

inline void save_gray_image(const GrayImage& img, const std::string& path) {
  if (detail::has_suffix(path, ".png")) return write_png(img, path);
  if (detail::has_suffix(path, ".pgm")) return write_pgm(img, path);
  throw InputError("unsupported image format '" + path + "' (expected .png or .pgm)");
}

}  // namespace fishloc
