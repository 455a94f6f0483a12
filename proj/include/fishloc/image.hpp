#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fishloc/error.hpp"

namespace fishloc {

/// Row-major 8-bit single-channel image. Pixel (u, v) has its center at
/// integer coordinates; u is the column, v the row.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height), data_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
    if (width < 0 || height < 0) throw InputError("image dimensions must be non-negative");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  std::uint8_t at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }

  const std::vector<std::uint8_t>& data() const { return data_; }
  std::vector<std::uint8_t>& data() { return data_; }

  bool operator==(const GrayImage&) const = default;

  /// Bilinear interpolation at a sub-pixel location. Requires
  /// 0 <= u <= width-1 and 0 <= v <= height-1.
  [[gnu::always_inline]] double bilinear(double u, double v) const {
    int u0 = static_cast<int>(u), v0 = static_cast<int>(v);
    const int du = u0 + 1 < width_ ? 1 : 0;
    const int dv = v0 + 1 < height_ ? width_ : 0;
    const double a = u - u0;
    const double b = v - v0;
    const std::uint8_t* p = data_.data() + static_cast<std::size_t>(v0) * width_ + u0;
    const double top = p[0] + a * (p[du] - p[0]);
    const double bottom = p[dv] + a * (p[dv + du] - p[dv]);
    return top + b * (bottom - top);
  }

  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u <= width_ - 1.0 && v <= height_ - 1.0;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};
static_assert(sizeof(Rgb) == 3);

class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height) : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height) {}

  /// Promotes a grayscale image to RGB.
  explicit RgbImage(const GrayImage& gray) : RgbImage(gray.width(), gray.height()) {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const auto g = gray.data()[i];
      data_[i] = {g, g, g};
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Rgb& at(int u, int v) { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const Rgb& at(int u, int v) const { return data_[static_cast<std::size_t>(v) * width_ + u]; }
  const std::vector<Rgb>& data() const { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> data_;
};

namespace detail {

inline void skip_pnm_whitespace(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

}  // namespace detail

/// Reads a binary (P5) or ASCII (P2) 8-bit PGM.
inline GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw InputError("'" + path + "' is not a PGM (P2/P5) file");
  int w = 0, h = 0, maxval = 0;
  detail::skip_pnm_whitespace(in);
  in >> w;
  detail::skip_pnm_whitespace(in);
  in >> h;
  detail::skip_pnm_whitespace(in);
  in >> maxval;
  if (!in || w <= 0 || h <= 0) throw InputError("'" + path + "': bad PGM header");
  if (maxval <= 0 || maxval > 255) throw InputError("'" + path + "': only 8-bit PGM is supported");
  GrayImage img(w, h);
  if (magic == "P5") {
    in.get();
    in.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
    if (in.gcount() != static_cast<std::streamsize>(img.data().size())) throw InputError("'" + path + "': truncated PGM data");
  } else {
    for (auto& px : img.data()) {
      int value = 0;
      if (!(in >> value) || value < 0 || value > maxval) throw InputError("'" + path + "': bad PGM pixel value");
      px = static_cast<std::uint8_t>(value);
    }
  }
  return img;
}

inline void write_pgm(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image '" + path + "'");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.data().size()));
}

inline void write_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write image '" + path + "'");
  out << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data().data()), static_cast<std::streamsize>(img.data().size() * 3));
}

}  // namespace fishloc
