#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/image.hpp"
#include "fishloc/image_io.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

/// Metric north-up raster. World coordinates of pixel (col, row) are
/// (origin_x + (col + col_offset) * resolution, origin_y - (row + row_offset) * resolution).
/// Crops only shift the integer offsets so georeferencing stays bit-exact.
struct SatelliteMap {
  GrayImage raster;
  double resolution = 0.1;
  double origin_x = 0.0;
  double origin_y = 0.0;
  long col_offset = 0;
  long row_offset = 0;

  void validate() const {
    if (!(resolution > 0.0) || !std::isfinite(resolution)) throw InputError("satellite map: resolution must be positive");
    if (raster.empty()) throw InputError("satellite map: raster is empty");
  }
};

inline Vec2 sat_pixel_to_world(const SatelliteMap& map, const Vec2& pixel) {
  return {map.origin_x + (pixel.x() + static_cast<double>(map.col_offset)) * map.resolution,
          map.origin_y - (pixel.y() + static_cast<double>(map.row_offset)) * map.resolution};
}

inline Vec2 world_to_sat_pixel(const SatelliteMap& map, const Vec2& world) {
  return {(world.x() - map.origin_x) / map.resolution - static_cast<double>(map.col_offset),
          (map.origin_y - world.y()) / map.resolution - static_cast<double>(map.row_offset)};
}

/// Noisy camera position (no orientation) bounding the search.
struct GpsInit {
  double x = 0.0;
  double y = 0.0;
  double search_radius = 0.0;

  void validate() const {
    if (!std::isfinite(x) || !std::isfinite(y)) throw InputError("GPS init must be finite");
    if (!(search_radius > 0.0)) throw InputError("GPS init: search radius must be positive");
  }
};

/// Square window of side 2 * search_radius around the GPS position,
/// clipped to the raster.
inline SatelliteMap crop_satellite(const SatelliteMap& map, const GpsInit& init) {
  map.validate();
  init.validate();
  const Vec2 center = world_to_sat_pixel(map, {init.x, init.y});
  const long side = std::max(1L, std::lround(2.0 * init.search_radius / map.resolution));
  const long c0 = std::lround(center.x() - side / 2.0);
  const long r0 = std::lround(center.y() - side / 2.0);
  const long c_begin = std::max(0L, c0), c_end = std::min<long>(map.raster.width(), c0 + side);
  const long r_begin = std::max(0L, r0), r_end = std::min<long>(map.raster.height(), r0 + side);
  if (c_begin >= c_end || r_begin >= r_end) {
    throw DomainError("GPS init window does not intersect the satellite raster (bad GPS initialization?)");
  }
  SatelliteMap out;
  out.resolution = map.resolution;
  out.origin_x = map.origin_x;
  out.origin_y = map.origin_y;
  out.col_offset = map.col_offset + c_begin;
  out.row_offset = map.row_offset + r_begin;
  out.raster = GrayImage(static_cast<int>(c_end - c_begin), static_cast<int>(r_end - r_begin));
  for (long r = r_begin; r < r_end; ++r) {
    for (long c = c_begin; c < c_end; ++c) {
      out.raster.at(static_cast<int>(c - c_begin), static_cast<int>(r - r_begin)) =
          map.raster.at(static_cast<int>(c), static_cast<int>(r));
    }
  }
  return out;
}

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  std::uint8_t reflectivity = 0;

  Vec3 position() const { return {x, y, z}; }
  bool operator==(const LidarPoint&) const = default;
};

/// LiDAR ground points with a uniform-grid index over (x, y).
class LidarGroundMap {
 public:
  static constexpr double kHeightRadius = 1.0;
  static constexpr int kHeightNeighbours = 8;

  LidarGroundMap() = default;

  explicit LidarGroundMap(std::vector<LidarPoint> points, double cell_size = 1.0)
      : points_(std::move(points)), cell_size_(cell_size) {
    if (!(cell_size > 0.0)) throw InputError("lidar index: cell size must be positive");
    build_index();
  }

  const std::vector<LidarPoint>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double cell_size() const { return cell_size_; }

  /// Indices (ascending) of all points with min <= (x, y) <= max.
  std::vector<std::size_t> query_box(const Vec2& min, const Vec2& max) const {
    std::vector<std::size_t> out;
    visit_cells(min, max, [&](std::size_t idx) {
      const auto& p = points_[idx];
      if (p.x >= min.x() && p.x <= max.x() && p.y >= min.y() && p.y <= max.y()) out.push_back(idx);
    });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Indices (ascending) of all points within `radius` of `center` in (x, y).
  std::vector<std::size_t> query_disc(const Vec2& center, double radius) const {
    std::vector<std::size_t> out;
    const double r2 = radius * radius;
    const Vec2 ext(radius, radius);
    visit_cells(center - ext, center + ext, [&](std::size_t idx) {
      const double dx = points_[idx].x - center.x(), dy = points_[idx].y - center.y();
      if (dx * dx + dy * dy <= r2) out.push_back(idx);
    });
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void build_index() {
    if (points_.empty()) return;
    min_x_ = max_x_ = points_[0].x;
    min_y_ = max_y_ = points_[0].y;
    for (const auto& p : points_) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
        throw InputError("lidar map contains a non-finite coordinate");
      }
      min_x_ = std::min(min_x_, p.x);
      max_x_ = std::max(max_x_, p.x);
      min_y_ = std::min(min_y_, p.y);
      max_y_ = std::max(max_y_, p.y);
    }
    nx_ = static_cast<long>(std::floor((max_x_ - min_x_) / cell_size_)) + 1;
    ny_ = static_cast<long>(std::floor((max_y_ - min_y_) / cell_size_)) + 1;
    if (static_cast<double>(nx_) * static_cast<double>(ny_) > 1e8) {
      throw InputError("lidar index: extent too large for the configured cell size");
    }
    std::vector<std::size_t> counts(static_cast<std::size_t>(nx_ * ny_) + 1, 0);
    for (const auto& p : points_) ++counts[cell_of(p.x, p.y) + 1];
    std::partial_sum(counts.begin(), counts.end(), counts.begin());
    cell_start_ = counts;
    cell_points_.resize(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      cell_points_[counts[cell_of(points_[i].x, points_[i].y)]++] = i;
    }
  }

  std::size_t cell_of(double x, double y) const {
    const long ix = std::clamp(static_cast<long>(std::floor((x - min_x_) / cell_size_)), 0L, nx_ - 1);
    const long iy = std::clamp(static_cast<long>(std::floor((y - min_y_) / cell_size_)), 0L, ny_ - 1);
    return static_cast<std::size_t>(iy * nx_ + ix);
  }

  template <typename Fn>
  void visit_cells(const Vec2& min, const Vec2& max, Fn&& fn) const {
    if (points_.empty() || max.x() < min_x_ || max.y() < min_y_ || min.x() > max_x_ || min.y() > max_y_) return;
    const long ix0 = std::clamp(static_cast<long>(std::floor((min.x() - min_x_) / cell_size_)), 0L, nx_ - 1);
    const long ix1 = std::clamp(static_cast<long>(std::floor((max.x() - min_x_) / cell_size_)), 0L, nx_ - 1);
    const long iy0 = std::clamp(static_cast<long>(std::floor((min.y() - min_y_) / cell_size_)), 0L, ny_ - 1);
    const long iy1 = std::clamp(static_cast<long>(std::floor((max.y() - min_y_) / cell_size_)), 0L, ny_ - 1);
    for (long iy = iy0; iy <= iy1; ++iy) {
      for (long ix = ix0; ix <= ix1; ++ix) {
        const auto cell = static_cast<std::size_t>(iy * nx_ + ix);
        for (std::size_t k = cell_start_[cell]; k < cell_start_[cell + 1]; ++k) fn(cell_points_[k]);
      }
    }
  }

  std::vector<LidarPoint> points_;
  double cell_size_ = 1.0;
  double min_x_ = 0.0, max_x_ = 0.0, min_y_ = 0.0, max_y_ = 0.0;
  long nx_ = 0, ny_ = 0;
  std::vector<std::size_t> cell_start_;
  std::vector<std::size_t> cell_points_;
};

/// Points within a disc, in index order; when more than `max_points` match,
/// a stable stride keeps exactly `max_points` of them.
inline std::vector<LidarPoint> query_ground_points(const LidarGroundMap& map, const Vec2& center, double radius,
                                                   std::size_t max_points) {
  if (!(radius > 0.0)) throw InputError("query radius must be positive");
  const auto idx = map.query_disc(center, radius);
  std::vector<LidarPoint> out;
  const std::size_t n = idx.size();
  const std::size_t m = (max_points == 0 || n <= max_points) ? n : max_points;
  out.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t pick = m == n ? k : static_cast<std::size_t>((static_cast<unsigned __int128>(k) * n) / m);
    out.push_back(map.points()[idx[pick]]);
  }
  return out;
}

/// Inverse-distance-weighted z of the 8 nearest points within 1 m.
inline double ground_height_at(const LidarGroundMap& map, const Vec2& xy) {
  const auto idx = map.query_disc(xy, LidarGroundMap::kHeightRadius);
  if (idx.empty()) throw DomainError("no ground points within 1 m of the query (off-map?)");
  std::vector<std::pair<double, std::size_t>> by_distance;
  by_distance.reserve(idx.size());
  for (auto i : idx) {
    const auto& p = map.points()[i];
    by_distance.emplace_back(std::hypot(p.x - xy.x(), p.y - xy.y()), i);
  }
  const std::size_t k = std::min<std::size_t>(LidarGroundMap::kHeightNeighbours, by_distance.size());
  std::partial_sort(by_distance.begin(), by_distance.begin() + static_cast<long>(k), by_distance.end());
  if (by_distance.front().first < 1e-12) return map.points()[by_distance.front().second].z;
  double weight_sum = 0.0, z_sum = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double w = 1.0 / by_distance[j].first;
    weight_sum += w;
    z_sum += w * map.points()[by_distance[j].second].z;
  }
  return z_sum / weight_sum;
}

struct PriorMap {
  SatelliteMap satellite;
  LidarGroundMap lidar;
};

// --- file formats ------------------------------------------------------------

/// World file: resolution, origin_x, origin_y (center of pixel (0,0)), axis tag.
inline void parse_world_file(const std::string& text, const std::string& source, SatelliteMap& map) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto body = trim(line);
    if (!body.empty() && body.front() != '#') lines.emplace_back(body);
  }
  if (lines.size() != 4) throw InputError(source + ": world file must have 4 lines, found " + std::to_string(lines.size()));
  map.resolution = parse_double(lines[0], source + ": resolution");
  map.origin_x = parse_double(lines[1], source + ": origin_x");
  map.origin_y = parse_double(lines[2], source + ": origin_y");
  if (lines[3] != "north-up") throw InputError(source + ": axis tag must be 'north-up', got '" + lines[3] + "'");
  if (!(map.resolution > 0.0)) throw InputError(source + ": resolution must be positive");
}

inline std::string format_world_file(const SatelliteMap& map) {
  // Offsets are folded into the origin; exact for integer offsets at binary-exact resolutions only.
  const Vec2 origin = sat_pixel_to_world(map, {0.0, 0.0});
  return format_double(map.resolution) + "\n" + format_double(origin.x()) + "\n" + format_double(origin.y()) +
         "\nnorth-up\n";
}

inline std::vector<LidarPoint> read_lidar_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, 4);
  std::vector<LidarPoint> points;
  points.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r[3] != std::floor(r[3]) || r[3] < 0.0 || r[3] > 255.0) {
      throw InputError(path + ": row " + std::to_string(i + 1) + ": reflectivity " + format_double(r[3]) +
                       " outside the integer range [0, 255]");
    }
    points.push_back({r[0], r[1], r[2], static_cast<std::uint8_t>(r[3])});
  }
  return points;
}

inline std::string format_lidar_csv(const std::vector<LidarPoint>& points) {
  std::string out = "x,y,z,reflectivity\n";
  for (const auto& p : points) {
    out += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.z) + "," +
           std::to_string(static_cast<int>(p.reflectivity)) + "\n";
  }
  return out;
}

inline PriorMap load_prior_map(const std::string& satellite_path, const std::string& world_file_path,
                               const std::string& lidar_path, double index_cell_size = 1.0) {
  PriorMap map;
  map.satellite.raster = load_gray_image(satellite_path);
  parse_world_file(read_text_file(world_file_path), world_file_path, map.satellite);
  map.satellite.validate();
  map.lidar = LidarGroundMap(read_lidar_csv(lidar_path), index_cell_size);
  return map;
}

}  // namespace fishloc
