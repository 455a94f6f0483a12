#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fishloc/error.hpp"

namespace fishloc {

inline constexpr int kIntensityBins = 256;

/// One co-observation: LiDAR reflectivity (x) and image gray level (y).
struct IntensitySample {
  std::uint8_t x = 0;
  std::uint8_t y = 0;
  bool operator==(const IntensitySample&) const = default;
};

/// Exact integer marginal and joint counts over 256 bins per variable.
struct IntensityHistogram {
  std::array<std::uint64_t, kIntensityBins> x{};
  std::array<std::uint64_t, kIntensityBins> y{};
  std::vector<std::uint64_t> joint = std::vector<std::uint64_t>(kIntensityBins * kIntensityBins, 0);
  std::uint64_t n = 0;

  void add(std::uint8_t xv, std::uint8_t yv) {
    ++x[xv];
    ++y[yv];
    ++joint[static_cast<std::size_t>(xv) * kIntensityBins + yv];
    ++n;
  }

  std::uint64_t joint_count(int xv, int yv) const { return joint[static_cast<std::size_t>(xv) * kIntensityBins + yv]; }

  /// Normalized-histogram probability estimates (count / n).
  double p_x(int k) const { return n == 0 ? 0.0 : static_cast<double>(x[k]) / static_cast<double>(n); }
  double p_y(int k) const { return n == 0 ? 0.0 : static_cast<double>(y[k]) / static_cast<double>(n); }
  double p_xy(int xv, int yv) const {
    return n == 0 ? 0.0 : static_cast<double>(joint_count(xv, yv)) / static_cast<double>(n);
  }
};

inline IntensityHistogram build_histogram(std::span<const IntensitySample> samples) {
  IntensityHistogram h;
  for (const auto& s : samples) h.add(s.x, s.y);
  return h;
}

/// Entropies in nats and MI = H_X + H_Y - H_XY.
struct Entropies {
  double h_x = 0.0;
  double h_y = 0.0;
  double h_xy = 0.0;
  double mi = 0.0;
};

namespace detail {

// Sums of c*ln(c) are accumulated as exact 2^-64 fixed-point integers, so an
// entropy does not depend on the order its bins are visited in.
using FixedSum = __int128;

inline FixedSum xlogx_fixed(std::uint64_t count) {
  if (count < 2) return 0;
  const double c = static_cast<double>(count);
  // c*ln(c) >= 2 ln 2 > 1, so scaling by 2^64 yields an exact integer.
  return static_cast<FixedSum>(std::ldexp(c * std::log(c), 64));
}

inline double entropy_from_fixed(FixedSum sum_xlogx, std::uint64_t n) {
  const double nd = static_cast<double>(n);
  return std::log(nd) - std::ldexp(static_cast<double>(sum_xlogx), -64) / nd;
}

}  // namespace detail

/// Shannon entropies of the normalized histogram with 0 log 0 = 0.
inline Entropies mutual_information(const IntensityHistogram& hist) {
  if (hist.n == 0) throw DomainError("mutual information of an empty sample set (no overlap)");
  detail::FixedSum sx = 0, sy = 0, sxy = 0;
  for (auto c : hist.x) sx += detail::xlogx_fixed(c);
  for (auto c : hist.y) sy += detail::xlogx_fixed(c);
  for (auto c : hist.joint) sxy += detail::xlogx_fixed(c);
  Entropies e;
  e.h_x = detail::entropy_from_fixed(sx, hist.n);
  e.h_y = detail::entropy_from_fixed(sy, hist.n);
  e.h_xy = detail::entropy_from_fixed(sxy, hist.n);
  e.mi = e.h_x + e.h_y - e.h_xy;
  return e;
}

inline Entropies mutual_information(std::span<const IntensitySample> samples) {
  return mutual_information(build_histogram(samples));
}

}  // namespace fishloc
