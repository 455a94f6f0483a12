#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/evaluation.hpp"
#include "fishloc/image.hpp"
#include "fishloc/mi_registration.hpp"
#include "fishloc/pnp.hpp"
#include "fishloc/prior_map.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

/// z = amplitude * sin(2 pi x / wavelength + phase_x) * cos(2 pi y / wavelength + phase_y)
struct HeightField {
  double amplitude = 0.0;
  double wavelength = 12.0;
  double phase_x = 0.0;
  double phase_y = 0.0;

  double operator()(double x, double y) const {
    if (amplitude == 0.0) return 0.0;
    constexpr double kTwoPi = 6.28318530717958647692;
    return amplitude * std::sin(kTwoPi * x / wavelength + phase_x) * std::cos(kTwoPi * y / wavelength + phase_y);
  }

  double bound() const { return std::abs(amplitude); }
};

struct SceneStyle {
  double extent = 80.0;             // side of the square map, meters
  double raster_resolution = 0.1;   // meters per pixel
  double lidar_spacing = 0.36;      // meters between LiDAR grid points
  double tile_min = 0.8;            // asphalt patch size range, meters
  double tile_max = 1.6;
  int asphalt_min = 30;
  int asphalt_max = 150;
  bool road_markings = true;
  double height_amplitude = 0.05;
  double height_wavelength = 12.0;
  double camera_height = 12.0;
  double max_center_offset = 2.0;   // GT camera xy drawn in +-this box
  double max_tilt = 2.0 * kDegree;  // GT roll and pitch drawn in +-this
  // Fisheye render photometry.
  double noise_sigma = 2.0;
  double gain = 0.9;
  double bias = 12.0;
  // Satellite layer = contrast * (255 (r / 255)^gamma - 128) + 128.
  double satellite_gamma = 0.8;
  double satellite_contrast = 1.2;
  // Georeferencing error of the satellite layer against the LiDAR frame, meters.
  double satellite_shift = 0.5;

  static SceneStyle noiseless() {
    SceneStyle s;
    s.noise_sigma = 0.0;
    s.gain = 1.0;
    s.bias = 0.0;
    s.satellite_shift = 0.0;
    return s;
  }

  void validate() const {
    if (!(extent > 0.0)) throw InputError("scene: extent must be positive");
    if (!(raster_resolution > 0.0) || !(lidar_spacing > 0.0)) throw InputError("scene: resolutions must be positive");
    if (!(tile_min > 0.0) || tile_max < tile_min) throw InputError("scene: invalid tile size range");
    if (asphalt_min < 0 || asphalt_max > 255 || asphalt_max < asphalt_min) throw InputError("scene: invalid asphalt range");
    if (!(camera_height > std::abs(height_amplitude))) throw InputError("scene: camera must be above the ground");
    if (noise_sigma < 0.0) throw InputError("scene: noise sigma must be >= 0");
    if (!(satellite_gamma > 0.0)) throw InputError("scene: satellite gamma must be positive");
    if (!(satellite_shift >= 0.0) || !std::isfinite(satellite_shift)) throw InputError("scene: satellite shift must be >= 0");
  }
};

/// Unified-model intrinsics covering a 180 degree field of view on 640x640.
inline CameraIntrinsics standard_intrinsics() {
  CameraIntrinsics k;
  k.fx = k.fy = 300.0;
  k.s = 0.0;
  k.cx = k.cy = 319.5;
  k.k1 = -0.02;
  k.k2 = 0.005;
  k.p1 = 0.0005;
  k.p2 = -0.0003;
  k.xi = 1.0;
  k.width = k.height = 640;
  return k;
}

inline std::uint8_t satellite_transform(std::uint8_t r, double gamma, double contrast) {
  const double g = 255.0 * std::pow(r / 255.0, gamma);
  return to_gray_level(contrast * (g - 128.0) + 128.0);
}

struct SyntheticScene {
  std::uint64_t seed = 0;
  SceneStyle style;
  SatelliteMap reflectivity;  // georeferenced like the satellite layer
  PriorMap map;
  HeightField height;
  CameraIntrinsics intrinsics;
  CameraPose gt_pose;
  std::vector<Vec2> corners;  // world (x, y) of marking corners
  Vec2 satellite_shift = Vec2::Zero();  // a feature at p appears in the satellite layer at p + shift

  /// Bilinear reflectivity at a world position, clamped to the raster.
  double reflectivity_at(double x, double y) const {
    const Vec2 px = world_to_sat_pixel(reflectivity, {x, y});
    const double u = std::clamp(px.x(), 0.0, reflectivity.raster.width() - 1.0);
    const double v = std::clamp(px.y(), 0.0, reflectivity.raster.height() - 1.0);
    return reflectivity.raster.bilinear(u, v);
  }

  bool on_map(double x, double y) const {
    const double h = style.extent / 2.0;
    return x >= -h && x <= h && y >= -h && y <= h;
  }

  Vec3 ground_point(const Vec2& xy) const { return {xy.x(), xy.y(), height(xy.x(), xy.y())}; }
};

namespace detail {

struct Marking {
  double l0, s0, l1, s1;  // road-frame box
  std::uint8_t value;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent stream for a named purpose under one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

}  // namespace detail

/// Procedural road scene: random asphalt patches, dashed lane lines and two
/// crosswalks, over a smooth height field. Deterministic in `seed`.
inline SyntheticScene generate_scene(std::uint64_t seed, const SceneStyle& style = {}) {
  style.validate();
  std::mt19937_64 rng(detail::derive_seed(seed, 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double a, double b) { return a + (b - a) * unit(rng); };

  SyntheticScene scene;
  scene.seed = seed;
  scene.style = style;
  scene.intrinsics = standard_intrinsics();
  scene.height = {style.height_amplitude, style.height_wavelength, uniform(0.0, 6.283), uniform(0.0, 6.283)};

  const double half = style.extent / 2.0;
  const int side = static_cast<int>(std::lround(style.extent / style.raster_resolution));
  scene.reflectivity.resolution = style.raster_resolution;
  scene.reflectivity.origin_x = -half + style.raster_resolution / 2.0;
  scene.reflectivity.origin_y = half - style.raster_resolution / 2.0;

  // Brick-like asphalt: rows of random height, each split into random widths.
  std::vector<double> row_edges{-half};
  while (row_edges.back() < half) row_edges.push_back(row_edges.back() + uniform(style.tile_min, style.tile_max));
  std::vector<std::vector<double>> col_edges(row_edges.size() - 1);
  std::vector<std::vector<std::uint8_t>> tile_value(row_edges.size() - 1);
  for (std::size_t r = 0; r + 1 < row_edges.size(); ++r) {
    col_edges[r].push_back(-half - uniform(0.0, style.tile_max));
    while (col_edges[r].back() < half) col_edges[r].push_back(col_edges[r].back() + uniform(style.tile_min, style.tile_max));
    for (std::size_t c = 0; c + 1 < col_edges[r].size(); ++c) {
      tile_value[r].push_back(static_cast<std::uint8_t>(
          std::uniform_int_distribution<int>(style.asphalt_min, style.asphalt_max)(rng)));
    }
  }

  // Road along direction `road_angle`; lateral coordinate l, along-road s.
  const double road_angle = uniform(-3.14159, 3.14159);
  const double ca = std::cos(road_angle), sa = std::sin(road_angle);
  const auto to_road = [&](double x, double y) { return std::pair{ca * x + sa * y, -sa * x + ca * y}; };
  const auto from_road = [&](double l, double s) { return Vec2(ca * l - sa * s, sa * l + ca * s); };
  std::vector<detail::Marking> markings;
  const auto marking_value = [&] {
    return static_cast<std::uint8_t>(std::uniform_int_distribution<int>(200, 240)(rng));
  };
  if (style.road_markings) {
    const double reach = half * 1.5;
    const double lane_shift = uniform(-1.0, 1.0);
    for (double lane : {-3.5, 0.0, 3.5}) {
      const double l = lane + lane_shift;
      const double phase = uniform(0.0, 6.0);
      for (double s = -reach - phase; s < reach; s += 6.0) markings.push_back({l - 0.15, s, l + 0.15, s + 3.0, marking_value()});
    }
    for (double sign : {-1.0, 1.0}) {
      const double s0 = sign * uniform(6.0, 10.0);
      for (double l = -6.5 + lane_shift; l < 6.5 + lane_shift; l += 1.1) markings.push_back({l, s0, l + 0.5, s0 + 3.0, marking_value()});
    }
  }

  const auto value_at = [&](double x, double y) -> std::uint8_t {
    const auto [l, s] = to_road(x, y);
    for (auto it = markings.rbegin(); it != markings.rend(); ++it) {
      if (l >= it->l0 && l < it->l1 && s >= it->s0 && s < it->s1) return it->value;
    }
    const auto r = static_cast<std::size_t>(std::upper_bound(row_edges.begin(), row_edges.end(), y) - row_edges.begin());
    const std::size_t row = std::clamp<std::size_t>(r, 1, row_edges.size() - 1) - 1;
    const auto& edges = col_edges[row];
    const auto c = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin());
    return tile_value[row][std::clamp<std::size_t>(c, 1, edges.size() - 1) - 1];
  };

  scene.reflectivity.raster = GrayImage(side, side);
  for (int v = 0; v < side; ++v) {
    for (int u = 0; u < side; ++u) {
      const Vec2 w = sat_pixel_to_world(scene.reflectivity, {double(u), double(v)});
      scene.reflectivity.raster.at(u, v) = value_at(w.x(), w.y());
    }
  }

  std::mt19937_64 shift_rng(detail::derive_seed(seed, 4));
  const double shift_angle = std::uniform_real_distribution<double>(-3.14159, 3.14159)(shift_rng);
  scene.satellite_shift = style.satellite_shift * Vec2(std::cos(shift_angle), std::sin(shift_angle));
  scene.map.satellite = scene.reflectivity;
  for (int v = 0; v < side; ++v) {
    for (int u = 0; u < side; ++u) {
      const Vec2 w = sat_pixel_to_world(scene.map.satellite, {double(u), double(v)}) - scene.satellite_shift;
      scene.map.satellite.raster.at(u, v) =
          satellite_transform(value_at(w.x(), w.y()), style.satellite_gamma, style.satellite_contrast);
    }
  }

  std::vector<LidarPoint> points;
  const int n_side = static_cast<int>(std::floor(style.extent / style.lidar_spacing));
  const double start = -half + (style.extent - (n_side - 1) * style.lidar_spacing) / 2.0;
  points.reserve(static_cast<std::size_t>(n_side) * n_side);
  for (int j = 0; j < n_side; ++j) {
    for (int i = 0; i < n_side; ++i) {
      const double x = start + i * style.lidar_spacing, y = start + j * style.lidar_spacing;
      points.push_back({x, y, scene.height(x, y), to_gray_level(scene.reflectivity_at(x, y))});
    }
  }
  scene.map.lidar = LidarGroundMap(std::move(points));

  // Corners with one marking quadrant and three clearly darker quadrants.
  const double probe = 0.2;
  for (const auto& m : markings) {
    for (const auto& [l, s, dl, ds] : std::array<std::array<double, 4>, 4>{
             {{m.l0, m.s0, 1, 1}, {m.l1, m.s0, -1, 1}, {m.l0, m.s1, 1, -1}, {m.l1, m.s1, -1, -1}}}) {
      const Vec2 w = from_road(l, s);
      if (std::abs(w.x()) > half - 1.0 || std::abs(w.y()) > half - 1.0) continue;
      bool ok = true;
      for (const auto& [ql, qs] : std::array<std::array<double, 2>, 4>{{{1, 1}, {-1, 1}, {1, -1}, {-1, -1}}}) {
        const Vec2 q = from_road(l + ql * dl * probe, s + qs * ds * probe);
        const int val = value_at(q.x(), q.y());
        const bool inside = ql > 0 && qs > 0;
        ok = ok && (inside ? val == m.value : m.value - val >= 40);
      }
      if (ok) scene.corners.push_back(w);
    }
  }

  const double cx = uniform(-style.max_center_offset, style.max_center_offset);
  const double cy = uniform(-style.max_center_offset, style.max_center_offset);
  const double roll = uniform(-style.max_tilt, style.max_tilt);
  const double pitch = uniform(-style.max_tilt, style.max_tilt);
  const double yaw = uniform(-3.14159, 3.14159);
  scene.gt_pose = CameraPose::from_center_rpy({cx, cy, scene.height(cx, cy) + style.camera_height}, roll, pitch, yaw);
  return scene;
}

/// First intersection of a world ray with the height field, by marching and
/// bisection to 1e-4 m along the ray. Empty when the ray misses the map.
inline std::optional<Vec3> intersect_ground(const SyntheticScene& scene, const Vec3& origin, const Vec3& direction) {
  if (!(direction.z() < 0.0)) return std::nullopt;
  const HeightField& h = scene.height;
  const double bound = h.bound();
  const auto above = [&](double t) {
    const Vec3 p = origin + t * direction;
    return p.z() - h(p.x(), p.y());
  };
  double t_lo = std::max(0.0, (origin.z() - bound) / -direction.z());
  const double t_end = (origin.z() + bound) / -direction.z();
  if (t_lo == 0.0 && above(0.0) < 0.0) throw DomainError("render: camera is below the ground");
  double t_hit;
  if (bound == 0.0) {
    t_hit = origin.z() / -direction.z();
  } else {
    const double horizontal = std::hypot(direction.x(), direction.y());
    const double step = std::min(0.05 / std::max(horizontal, 1e-9), std::max(t_end - t_lo, 1e-9));
    double t_hi = t_lo;
    while (true) {
      t_hi = std::min(t_lo + step, t_end);
      if (above(t_hi) <= 0.0) break;
      if (t_hi >= t_end) return std::nullopt;
      t_lo = t_hi;
      const Vec3 p = origin + t_lo * direction;
      if (!scene.on_map(p.x(), p.y())) return std::nullopt;
    }
    while (t_hi - t_lo > 1e-4) {
      const double mid = 0.5 * (t_lo + t_hi);
      (above(mid) > 0.0 ? t_lo : t_hi) = mid;
    }
    t_hit = 0.5 * (t_lo + t_hi);
  }
  const Vec3 p = origin + t_hit * direction;
  if (!scene.on_map(p.x(), p.y())) return std::nullopt;
  return p;
}

/// World point seen through a fisheye pixel, if any.
inline std::optional<Vec3> pixel_ground_point(const SyntheticScene& scene, const FisheyeProjector& projector,
                                              const CameraPose& pose, const Vec2& pixel) {
  Vec3 ray;
  if (!projector.try_unproject(pixel, ray)) return std::nullopt;
  return intersect_ground(scene, pose.center(), pose.rotation().transpose() * ray);
}

/// Fisheye image of the reflectivity layer from `pose` with the scene's
/// gain, bias and Gaussian noise; pixels that miss the map are 0.
inline GrayImage render_fisheye(const SyntheticScene& scene, const CameraPose& pose) {
  scene.intrinsics.validate();
  const FisheyeProjector projector(scene.intrinsics);
  const Vec3 c = pose.center();
  if (scene.on_map(c.x(), c.y()) && c.z() <= scene.height(c.x(), c.y())) {
    throw DomainError("render: camera is below the ground");
  }
  std::mt19937_64 rng(detail::derive_seed(scene.seed, 2));
  std::normal_distribution<double> noise(0.0, 1.0);
  const auto& st = scene.style;
  GrayImage image(scene.intrinsics.width, scene.intrinsics.height);
  for (int v = 0; v < image.height(); ++v) {
    for (int u = 0; u < image.width(); ++u) {
      const auto hit = pixel_ground_point(scene, projector, pose, {double(u), double(v)});
      if (!hit) continue;
      double value = st.gain * scene.reflectivity_at(hit->x(), hit->y()) + st.bias;
      if (st.noise_sigma > 0.0) value += st.noise_sigma * noise(rng);
      image.at(u, v) = to_gray_level(value);
    }
  }
  return image;
}

inline GrayImage render_fisheye(const SyntheticScene& scene) { return render_fisheye(scene, scene.gt_pose); }

/// True when the reflectivity raster is constant over everything the
/// bilinear image sample at the point's projection can see: the point's own
/// raster support and the supports of the four surrounding pixels' ground hits.
inline bool is_interior(const SyntheticScene& scene, const CameraPose& pose, const LidarPoint& point) {
  const FisheyeProjector projector(scene.intrinsics);
  Vec2 px;
  if (!projector.project(pose.to_camera(point.position()), px)) return false;
  const auto& raster = scene.reflectivity.raster;
  const auto support_constant = [&](double x, double y) {
    const Vec2 q = world_to_sat_pixel(scene.reflectivity, {x, y});
    const int u0 = static_cast<int>(std::floor(q.x())), v0 = static_cast<int>(std::floor(q.y()));
    if (u0 < 0 || v0 < 0 || u0 + 1 >= raster.width() || v0 + 1 >= raster.height()) return false;
    for (int dv = 0; dv <= 1; ++dv) {
      for (int du = 0; du <= 1; ++du) {
        if (raster.at(u0 + du, v0 + dv) != point.reflectivity) return false;
      }
    }
    return true;
  };
  if (!support_constant(point.x, point.y)) return false;
  const int u0 = static_cast<int>(std::floor(px.x())), v0 = static_cast<int>(std::floor(px.y()));
  for (int dv = 0; dv <= 1; ++dv) {
    for (int du = 0; du <= 1; ++du) {
      const int u = std::min(u0 + du, scene.intrinsics.width - 1), v = std::min(v0 + dv, scene.intrinsics.height - 1);
      const auto hit = pixel_ground_point(scene, projector, pose, {double(u), double(v)});
      if (!hit || !support_constant(hit->x(), hit->y())) return false;
    }
  }
  return true;
}

// --- correspondences and check points -----------------------------------------

struct FabricationOptions {
  std::size_t count = 40;
  double outlier_fraction = 0.3;
  double noise_sigma = 0.5;        // pixels, added to rectified coordinates
  double gps_noise = 2.0;          // meters, uniform on the GPS position
  double search_radius = 15.0;     // meters, satellite crop half-size
  std::uint64_t seed = 0;
};

struct SyntheticMatches {
  CorrespondenceSet matches;
  GpsInit gps;
  SatelliteMap crop;
  RectificationSpec spec;
};

/// Marking corners seen by the GT rectified camera, matched to their
/// cropped-satellite pixels, with noise and a flagged outlier fraction.
inline SyntheticMatches fabricate_correspondences(const SyntheticScene& scene, const FabricationOptions& options) {
  if (options.count < 4) throw InputError("fabricate_correspondences: need at least 4 correspondences");
  if (!(options.outlier_fraction >= 0.0 && options.outlier_fraction <= 1.0)) {
    throw InputError("fabricate_correspondences: outlier fraction must be in [0, 1]");
  }
  std::mt19937_64 rng(detail::derive_seed(options.seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticMatches out;
  out.spec = RectificationSpec::default_for(scene.intrinsics);
  const Vec3 c = scene.gt_pose.center();
  out.gps = {c.x() + options.gps_noise * (2.0 * unit(rng) - 1.0), c.y() + options.gps_noise * (2.0 * unit(rng) - 1.0),
             options.search_radius};
  out.crop = crop_satellite(scene.map.satellite, out.gps);

  const CameraPose virtual_pose = out.spec.virtual_pose(scene.gt_pose);
  const PinholeCamera camera = out.spec.camera();
  struct Visible {
    Vec2 rectified;
    Vec2 satellite;
  };
  std::vector<Visible> visible;
  for (const auto& xy : scene.corners) {
    Vec2 px;
    if (!camera.project(virtual_pose.to_camera(scene.ground_point(xy)), px)) continue;
    if (px.x() < 1.0 || px.y() < 1.0 || px.x() > camera.width - 2.0 || px.y() > camera.height - 2.0) continue;
    const Vec2 sat = world_to_sat_pixel(out.crop, xy + scene.satellite_shift);
    if (sat.x() < 0.0 || sat.y() < 0.0 || sat.x() > out.crop.raster.width() - 1.0 ||
        sat.y() > out.crop.raster.height() - 1.0) {
      continue;
    }
    visible.push_back({px, sat});
  }
  if (visible.size() < options.count) {
    throw DomainError("fabricate_correspondences: only " + std::to_string(visible.size()) +
                      " scene corners are visible, " + std::to_string(options.count) + " requested");
  }
  std::shuffle(visible.begin(), visible.end(), rng);
  visible.resize(options.count);

  const auto n_out = static_cast<std::size_t>(std::lround(options.outlier_fraction * static_cast<double>(options.count)));
  std::vector<std::size_t> order(options.count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> outlier(options.count, false);
  for (std::size_t k = 0; k < n_out; ++k) outlier[order[k]] = true;

  for (std::size_t i = 0; i < options.count; ++i) {
    Correspondence m;
    m.rectified = visible[i].rectified + options.noise_sigma * Vec2(gauss(rng), gauss(rng));
    m.satellite = visible[i].satellite;
    if (outlier[i]) {
      m.satellite = {unit(rng) * (out.crop.raster.width() - 1.0), unit(rng) * (out.crop.raster.height() - 1.0)};
    }
    m.true_inlier = !outlier[i];
    out.matches.push_back(m);
  }
  return out;
}

/// Marking corners projected through the GT pose, at most `count` of them,
/// evenly spread over the visible ones.
inline std::vector<CheckPoint> synthetic_check_points(const SyntheticScene& scene, std::size_t count) {
  std::vector<CheckPoint> visible;
  for (const auto& xy : scene.corners) {
    const Vec3 w = scene.ground_point(xy);
    if (const auto px = project(scene.intrinsics, scene.gt_pose, w)) visible.push_back({w, *px});
  }
  if (count == 0 || visible.size() <= count) return visible;
  std::vector<CheckPoint> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(visible[k * visible.size() / count]);
  return out;
}

// --- robustness trials -------------------------------------------------------

struct TrialSuiteConfig {
  int n_trials = 100;
  std::array<double, 4> bounds = {1.0, 1.0, 0.3, 5.0 * kDegree};  // +- on x, y, z, yaw
  GridSearchConfig grid;
  std::uint64_t seed = 0;
  double translation_tolerance = 0.2;
  double yaw_tolerance = 0.5 * kDegree;
};

struct TrialResult {
  int index = 0;
  Theta init;
  Theta final;
  double mi = 0.0;
  std::size_t n_points = 0;
  double translation_error = 0.0;  // meters, 3D
  double yaw_error = 0.0;          // radians, signed
  bool converged = false;
};

struct TrialSummary {
  std::vector<TrialResult> trials;
  int converged = 0;
  double translation_dispersion = 0.0;  // per-axis std / step, RMS over x, y, z
  double yaw_dispersion = 0.0;          // std / step
};

inline double wrap_angle(double a) {
  constexpr double kPi = 3.14159265358979323846;
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Initial pose of one trial: GT perturbed uniformly within the bounds.
inline CameraPose perturbed_init(const CameraPose& gt, const std::array<double, 4>& bounds, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const Vec3 rpy = gt.rpy();
  Theta t = Theta::from_pose(gt);
  for (int d = 0; d < 4; ++d) t[d] += bounds[d] * unit(rng);
  return pose_from_theta(t, rpy.x(), rpy.y());
}

inline TrialSummary summarize_trials(std::vector<TrialResult> trials, const Theta& gt, const GridSearchConfig& grid) {
  TrialSummary summary;
  summary.trials = std::move(trials);
  if (summary.trials.empty()) return summary;
  const auto stddev = [&](auto&& value) {
    double mean = 0.0;
    for (const auto& t : summary.trials) mean += value(t);
    mean /= static_cast<double>(summary.trials.size());
    double var = 0.0;
    for (const auto& t : summary.trials) var += (value(t) - mean) * (value(t) - mean);
    return std::sqrt(var / static_cast<double>(summary.trials.size()));
  };
  double sum_sq = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double s = stddev([&](const TrialResult& t) { return t.final[d] - gt[d]; }) / grid.step[d];
    sum_sq += s * s;
  }
  summary.translation_dispersion = std::sqrt(sum_sq / 3.0);
  summary.yaw_dispersion = stddev([](const TrialResult& t) { return t.yaw_error; }) / grid.step[3];
  for (const auto& t : summary.trials) summary.converged += t.converged ? 1 : 0;
  return summary;
}

/// Grid search from `n_trials` perturbed initializations against `image`
/// (normally the scene rendered at GT). Per-trial seeds derive from the
/// suite seed, so any subset of trials can be rerun alone.
inline TrialSummary robustness_trial_suite(const SyntheticScene& scene, const GrayImage& image,
                                           const TrialSuiteConfig& config) {
  if (config.n_trials < 1) throw InputError("trial suite: n_trials must be >= 1");
  const Theta gt = Theta::from_pose(scene.gt_pose);
  std::vector<TrialResult> trials;
  for (int i = 0; i < config.n_trials; ++i) {
    const CameraPose init = perturbed_init(scene.gt_pose, config.bounds, detail::derive_seed(config.seed, 100 + i));
    TrialResult r;
    r.index = i;
    r.init = Theta::from_pose(init);
    const auto result = grid_search(init, config.grid, image, scene.intrinsics, scene.map.lidar);
    r.final = result.best.theta;
    r.mi = result.best.mi;
    r.n_points = result.best.n_points;
    r.translation_error = std::sqrt((r.final.x - gt.x) * (r.final.x - gt.x) + (r.final.y - gt.y) * (r.final.y - gt.y) +
                                    (r.final.z - gt.z) * (r.final.z - gt.z));
    r.yaw_error = wrap_angle(r.final.yaw - gt.yaw);
    r.converged = r.translation_error <= config.translation_tolerance && std::abs(r.yaw_error) <= config.yaw_tolerance;
    trials.push_back(r);
  }
  return summarize_trials(std::move(trials), gt, config.grid);
}

inline TrialSummary robustness_trial_suite(const SyntheticScene& scene, const TrialSuiteConfig& config) {
  return robustness_trial_suite(scene, render_fisheye(scene), config);
}

inline const char* kTrialCsvHeader =
    "trial,init_x,init_y,init_z,init_psi,final_x,final_y,final_z,final_psi,n,MI,translation_error,yaw_error,converged\n";

inline std::string format_trials_csv(const std::vector<TrialResult>& trials) {
  std::string out = kTrialCsvHeader;
  for (const auto& t : trials) {
    out += std::to_string(t.index);
    for (int d = 0; d < 4; ++d) out += "," + format_double(t.init[d]);
    for (int d = 0; d < 4; ++d) out += "," + format_double(t.final[d]);
    out += "," + std::to_string(t.n_points) + "," + format_double(t.mi) + "," + format_double(t.translation_error) + "," +
           format_double(t.yaw_error) + "," + (t.converged ? "1" : "0") + "\n";
  }
  return out;
}

inline std::vector<TrialResult> parse_trials_csv(const std::string& path) {
  std::vector<TrialResult> out;
  for (const auto& r : read_numeric_csv(path, 14)) {
    TrialResult t;
    t.index = static_cast<int>(r[0]);
    for (int d = 0; d < 4; ++d) t.init[d] = r[1 + d];
    for (int d = 0; d < 4; ++d) t.final[d] = r[5 + d];
    t.n_points = static_cast<std::size_t>(r[9]);
    t.mi = r[10];
    t.translation_error = r[11];
    t.yaw_error = r[12];
    t.converged = r[13] != 0.0;
    out.push_back(t);
  }
  return out;
}

}  // namespace fishloc
