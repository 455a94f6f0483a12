#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/image.hpp"
#include "fishloc/mutual_information.hpp"
#include "fishloc/prior_map.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

/// Refined parameters: camera center (x, y, z) in meters and yaw in radians.
struct Theta {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  static Theta from_pose(const CameraPose& pose) {
    const Vec3 c = pose.center();
    return {c.x(), c.y(), c.z(), pose.rpy().z()};
  }

  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : i == 2 ? z : yaw; }
  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : i == 2 ? z : yaw; }

  bool operator==(const Theta&) const = default;
};

inline CameraPose pose_from_theta(const Theta& theta, double roll, double pitch) {
  return CameraPose::from_center_rpy({theta.x, theta.y, theta.z}, roll, pitch, theta.yaw);
}

struct MIEvaluation {
  Theta theta;
  std::size_t n_points = 0;
  double h_x = 0.0;
  double h_y = 0.0;
  double h_xy = 0.0;
  double mi = -std::numeric_limits<double>::infinity();
  bool valid = false;
};

inline constexpr std::size_t kDefaultMinPoints = 500;

/// Reusable objective: projects LiDAR points into the image, histograms
/// (reflectivity, gray level) pairs and returns their MI. Holds scratch
/// buffers, so one instance per thread. Points are projected with the
/// same arithmetic as FisheyeProjector::project.
class MIEvaluator {
 public:
  MIEvaluator(const GrayImage& image, const CameraIntrinsics& intrinsics, std::span<const LidarPoint> points,
              std::size_t min_points = kDefaultMinPoints)
      : image_(&image), k_(intrinsics), projector_(intrinsics), r2_limit_(projector_.r2_limit()),
        min_points_(min_points) {
    intrinsics.validate();
    if (image.width() != intrinsics.width || image.height() != intrinsics.height) {
      throw InputError("image size " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                       " does not match the intrinsics " + std::to_string(intrinsics.width) + "x" +
                       std::to_string(intrinsics.height));
    }
    const auto n = static_cast<Eigen::Index>(points.size());
    world_.resize(3, n);
    reflectivity_.reserve(points.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = points[static_cast<std::size_t>(i)];
      world_.col(i) << p.x, p.y, p.z;
      reflectivity_.push_back(p.reflectivity);
    }
    for (auto* a : {&x_, &y_, &z_, &norm_, &denom_, &mx_, &my_, &r2_, &u_, &v_}) a->resize(std::min(n, kChunk));
    xlogx_.resize(points.size() + 1);
    for (std::size_t c = 0; c < xlogx_.size(); ++c) xlogx_[c] = detail::xlogx_fixed(c);
    joint_.assign(kIntensityBins * kIntensityBins, 0);
    touched_.reserve(points.size());
  }

  std::size_t size() const { return reflectivity_.size(); }

  /// Paired samples for a pose, in point order.
  std::vector<IntensitySample> samples(const CameraPose& pose) {
    std::vector<IntensitySample> out;
    for_each_sample(pose, [&](IntensitySample s) { out.push_back(s); });
    return out;
  }

  MIEvaluation evaluate(const Theta& theta, double roll, double pitch) {
    const CameraPose pose = pose_from_theta(theta, roll, pitch);
    std::size_t n = 0;
    for_each_sample(pose, [&](IntensitySample s) {
      ++hx_[s.x];
      ++hy_[s.y];
      const std::uint32_t idx = static_cast<std::uint32_t>(s.x) * kIntensityBins + s.y;
      if (joint_[idx]++ == 0) touched_.push_back(idx);
      ++n;
    });
    detail::FixedSum sx = 0, sy = 0, sxy = 0;
    for (int k = 0; k < kIntensityBins; ++k) {
      sx += xlogx_[hx_[k]];
      sy += xlogx_[hy_[k]];
      hx_[k] = hy_[k] = 0;
    }
    for (auto idx : touched_) {
      sxy += xlogx_[joint_[idx]];
      joint_[idx] = 0;
    }
    touched_.clear();

    MIEvaluation e;
    e.theta = theta;
    e.n_points = n;
    if (n > 0) {
      e.h_x = detail::entropy_from_fixed(sx, n);
      e.h_y = detail::entropy_from_fixed(sy, n);
      e.h_xy = detail::entropy_from_fixed(sxy, n);
    }
    e.valid = n > 0 && n >= min_points_;
    e.mi = e.valid ? e.h_x + e.h_y - e.h_xy : -std::numeric_limits<double>::infinity();
    return e;
  }

 private:
  template <typename Fn>
  void for_each_sample(const CameraPose& pose, Fn&& fn) {
    const Mat3& r = pose.rotation();
    if (!has_rotation_ || r != cached_rotation_) {
      const Eigen::Matrix3Xd rotated = r * world_;
      rx_ = rotated.row(0).transpose().array();
      ry_ = rotated.row(1).transpose().array();
      rz_ = rotated.row(2).transpose().array();
      cached_rotation_ = r;
      has_rotation_ = true;
    }
    const double tx = pose.translation().x(), ty = pose.translation().y(), tz = pose.translation().z();
    const CameraIntrinsics& k = k_;
    const double u_max = k.width - 1.0, v_max = k.height - 1.0;
    const auto n = rx_.size();
    for (Eigen::Index start = 0; start < n; start += kChunk) {
      const Eigen::Index len = std::min<Eigen::Index>(kChunk, n - start);
      auto x = x_.head(len), y = y_.head(len), z = z_.head(len), norm = norm_.head(len), denom = denom_.head(len);
      auto mx = mx_.head(len), my = my_.head(len), r2 = r2_.head(len), u = u_.head(len), v = v_.head(len);
      x = rx_.segment(start, len) + tx;
      y = ry_.segment(start, len) + ty;
      z = rz_.segment(start, len) + tz;
      norm = (x * x + y * y + z * z).sqrt();
      denom = z + k.xi * norm;
      r2 = 1.0 / denom;
      mx = x * r2;
      my = y * r2;
      r2 = mx * mx + my * my;
      // x now holds the radial factor and y the distorted y.
      auto radial = x_.head(len);
      radial = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
      u = k.fx * (mx * radial + 2.0 * k.p1 * mx * my + k.p2 * (r2 + 2.0 * mx * mx));
      y = my * radial + k.p1 * (r2 + 2.0 * my * my) + 2.0 * k.p2 * mx * my;
      u = u + k.s * y + k.cx;
      v = k.fy * y + k.cy;
      // Keep the visible points first, then sample them in a short loop.
      Eigen::Index m = 0;
      for (Eigen::Index j = 0; j < len; ++j) {
        const double nj = norm[j];
        if (!(nj > 0.0) || denom[j] <= kProjectionEpsilon * nj || nj + k.xi * z[j] <= 0.0 || r2[j] >= r2_limit_ ||
            !projector_.distortion_invertible(mx[j], my[j])) {
          continue;
        }
        const double uj = u[j], vj = v[j];
        if (!(uj >= 0.0 && vj >= 0.0 && uj <= u_max && vj <= v_max)) continue;
        u[m] = uj;
        v[m] = vj;
        kept_[static_cast<std::size_t>(m++)] = static_cast<std::uint32_t>(start + j);
      }
      for (Eigen::Index j = 0; j < m; ++j) gray_[static_cast<std::size_t>(j)] = to_gray_level(image_->bilinear(u[j], v[j]));
      for (std::size_t j = 0; j < static_cast<std::size_t>(m); ++j) {
        fn(IntensitySample{reflectivity_[kept_[j]], gray_[j]});
      }
    }
  }

  static constexpr Eigen::Index kChunk = 256;

  const GrayImage* image_;
  CameraIntrinsics k_;
  FisheyeProjector projector_;
  double r2_limit_;
  std::size_t min_points_;
  Eigen::Matrix3Xd world_;
  std::vector<std::uint8_t> reflectivity_;
  Eigen::ArrayXd rx_, ry_, rz_;
  Eigen::ArrayXd x_, y_, z_, norm_, denom_, mx_, my_, r2_, u_, v_;
  std::vector<std::uint32_t> kept_ = std::vector<std::uint32_t>(kChunk);
  std::vector<std::uint8_t> gray_ = std::vector<std::uint8_t>(kChunk);
  Mat3 cached_rotation_ = Mat3::Zero();
  bool has_rotation_ = false;
  std::vector<detail::FixedSum> xlogx_;
  std::array<std::uint32_t, kIntensityBins> hx_{};
  std::array<std::uint32_t, kIntensityBins> hy_{};
  std::vector<std::uint32_t> joint_;
  std::vector<std::uint32_t> touched_;
};

/// (X_i, Y_i) pairs for every point that projects into the image.
inline std::vector<IntensitySample> sample_intensities(const GrayImage& image, const CameraIntrinsics& intrinsics,
                                                       const CameraPose& pose, std::span<const LidarPoint> points) {
  return MIEvaluator(image, intrinsics, points, 0).samples(pose);
}

inline MIEvaluation evaluate_pose(const Theta& theta, double roll, double pitch, const GrayImage& image,
                                  const CameraIntrinsics& intrinsics, std::span<const LidarPoint> points,
                                  std::size_t min_points = kDefaultMinPoints) {
  return MIEvaluator(image, intrinsics, points, min_points).evaluate(theta, roll, pitch);
}

inline constexpr double kDegree = 3.14159265358979323846 / 180.0;

/// Exhaustive search box around the initial pose.
struct GridSearchConfig {
  std::array<double, 4> half_range = {2.0, 2.0, 0.5, 5.0 * kDegree};
  std::array<double, 4> step = {0.2, 0.2, 0.1, 0.5 * kDegree};
  int stages = 2;
  double shrink = 5.0;
  std::size_t min_points = kDefaultMinPoints;
  double point_radius = 40.0;    // meters around the initial camera position
  std::size_t max_points = 2000;  // 0 keeps every point in the disc
  int threads = 0;                // 0 = FISHLOC_THREADS or hardware concurrency

  void validate() const {
    for (int d = 0; d < 4; ++d) {
      if (!(step[d] > 0.0) || !std::isfinite(step[d])) throw InputError("grid: steps must be positive");
      if (!(half_range[d] >= 0.0) || !std::isfinite(half_range[d])) throw InputError("grid: half-ranges must be >= 0");
      if (half_range[d] / step[d] > 1e5) throw InputError("grid: too many cells along one dimension");
    }
    if (stages < 1) throw InputError("grid: at least one stage required");
    if (stages > 1 && !(shrink > 1.0)) throw InputError("grid: shrink factor must exceed 1");
    if (!(point_radius > 0.0)) throw InputError("grid: point radius must be positive");
  }
};

/// Thread count from an explicit request, the FISHLOC_THREADS variable, or the hardware.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("FISHLOC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// One stage of the search: cells are ordered yaw-major, then x, y, z.
struct GridStage {
  Theta center;
  std::array<double, 4> half_range{};
  std::array<double, 4> step{};
  std::array<int, 4> counts{};  // cells per side: offsets -counts..counts
  std::vector<MIEvaluation> cells;

  std::size_t size() const {
    std::size_t s = 1;
    for (int c : counts) s *= static_cast<std::size_t>(2 * c + 1);
    return s;
  }

  Theta theta_at(std::size_t index) const {
    std::array<int, 4> k{};
    // Dimension order from slowest to fastest: yaw, x, y, z.
    constexpr int order[4] = {3, 0, 1, 2};
    for (int j = 3; j >= 0; --j) {
      const int d = order[j];
      const auto span = static_cast<std::size_t>(2 * counts[d] + 1);
      k[d] = static_cast<int>(index % span) - counts[d];
      index /= span;
    }
    Theta t = center;
    for (int d = 0; d < 4; ++d) t[d] = center[d] + k[d] * step[d];
    return t;
  }
};

struct GridSearchResult {
  CameraPose pose;
  MIEvaluation best;
  MIEvaluation initial;
  std::vector<GridStage> stages;
};

/// Strict total order used to pick the argmax: higher MI, then closer to
/// the initial parameters, then lexicographically smaller parameters.
inline bool better_evaluation(const MIEvaluation& a, const MIEvaluation& b, const Theta& init) {
  if (a.valid != b.valid) return a.valid;
  if (a.mi != b.mi) return a.mi > b.mi;
  const auto dist2 = [&](const Theta& t) {
    double s = 0.0;
    for (int d = 0; d < 4; ++d) s += (t[d] - init[d]) * (t[d] - init[d]);
    return s;
  };
  const double da = dist2(a.theta), db = dist2(b.theta);
  if (da != db) return da < db;
  for (int d = 0; d < 4; ++d) {
    if (a.theta[d] != b.theta[d]) return a.theta[d] < b.theta[d];
  }
  return false;
}

namespace detail {

inline std::array<int, 4> grid_counts(const std::array<double, 4>& half, const std::array<double, 4>& step) {
  std::array<int, 4> c{};
  for (int d = 0; d < 4; ++d) c[d] = static_cast<int>(std::floor(half[d] / step[d] + 1e-9));
  return c;
}

/// Evaluates every cell of `stage` (filling stage.cells) and returns the best index.
inline std::size_t run_stage(GridStage& stage, const Theta& init, double roll, double pitch, const GrayImage& image,
                             const CameraIntrinsics& intrinsics, std::span<const LidarPoint> points,
                             std::size_t min_points, int threads) {
  const std::size_t total = stage.size();
  stage.cells.assign(total, MIEvaluation{});
  const int workers = static_cast<int>(std::min<std::size_t>(std::max(1, threads), total));
  std::vector<std::size_t> best(workers, 0);
  const auto work = [&](int w) {
    MIEvaluator evaluator(image, intrinsics, points, min_points);
    const std::size_t begin = total * w / workers, end = total * (w + 1) / workers;
    std::size_t local = begin;
    for (std::size_t i = begin; i < end; ++i) {
      stage.cells[i] = evaluator.evaluate(stage.theta_at(i), roll, pitch);
      if (i != begin && better_evaluation(stage.cells[i], stage.cells[local], init)) local = i;
    }
    best[w] = local;
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::size_t winner = best[0];
  for (int w = 1; w < workers; ++w) {
    if (better_evaluation(stage.cells[best[w]], stage.cells[winner], init)) winner = best[w];
  }
  return winner;
}

}  // namespace detail

/// Exhaustive coarse-to-fine maximization of MI over (x, y, z, yaw), with
/// roll and pitch held at the initial pose's values.
inline GridSearchResult grid_search(const CameraPose& init, const GridSearchConfig& config, const GrayImage& image,
                                    const CameraIntrinsics& intrinsics, std::span<const LidarPoint> points) {
  config.validate();
  const Vec3 rpy = init.rpy();
  const Theta theta0 = Theta::from_pose(init);
  const int threads = resolve_threads(config.threads);

  GridSearchResult result;
  result.initial = evaluate_pose(theta0, rpy.x(), rpy.y(), image, intrinsics, points, config.min_points);
  Theta center = theta0;
  std::array<double, 4> half = config.half_range;
  std::array<double, 4> step = config.step;
  MIEvaluation best;
  for (int s = 0; s < config.stages; ++s) {
    GridStage stage;
    stage.center = center;
    stage.half_range = half;
    stage.step = step;
    stage.counts = detail::grid_counts(half, step);
    const std::size_t winner =
        detail::run_stage(stage, theta0, rpy.x(), rpy.y(), image, intrinsics, points, config.min_points, threads);
    best = stage.cells[winner];
    result.stages.push_back(std::move(stage));
    if (!best.valid) {
      throw MIFailure("grid search: every cell has fewer than " + std::to_string(config.min_points) +
                      " in-view points; enlarge the search ranges or supply more map points");
    }
    center = best.theta;
    for (int d = 0; d < 4; ++d) {
      half[d] = step[d];
      step[d] = step[d] / config.shrink;
    }
  }
  result.best = best;
  result.pose = best.theta == theta0 ? init : pose_from_theta(best.theta, rpy.x(), rpy.y());
  return result;
}

/// Selects the map points used by the objective around the pose's position.
inline std::vector<LidarPoint> select_points(const LidarGroundMap& map, const CameraPose& pose,
                                             const GridSearchConfig& config) {
  const Vec3 c = pose.center();
  return query_ground_points(map, {c.x(), c.y()}, config.point_radius, config.max_points);
}

inline GridSearchResult grid_search(const CameraPose& init, const GridSearchConfig& config, const GrayImage& image,
                                    const CameraIntrinsics& intrinsics, const LidarGroundMap& map) {
  const auto points = select_points(map, init, config);
  return grid_search(init, config, image, intrinsics, std::span<const LidarPoint>(points));
}

/// MI along each single parameter and over every pair of parameters, using
/// the first-stage ranges and steps around the initial pose.
struct MISlices {
  Theta center;
  std::array<std::vector<MIEvaluation>, 4> line;  // offsets -n..n along x, y, z, yaw
  struct Surface {
    int dim_a = 0;
    int dim_b = 0;
    std::vector<MIEvaluation> cells;  // dim_a major
  };
  std::vector<Surface> surfaces;
};

inline MISlices mi_slices(const CameraPose& init, const GridSearchConfig& config, const GrayImage& image,
                          const CameraIntrinsics& intrinsics, std::span<const LidarPoint> points) {
  config.validate();
  const Vec3 rpy = init.rpy();
  MISlices out;
  out.center = Theta::from_pose(init);
  const auto counts = detail::grid_counts(config.half_range, config.step);
  MIEvaluator evaluator(image, intrinsics, points, config.min_points);
  for (int d = 0; d < 4; ++d) {
    for (int k = -counts[d]; k <= counts[d]; ++k) {
      Theta t = out.center;
      t[d] = out.center[d] + k * config.step[d];
      out.line[d].push_back(evaluator.evaluate(t, rpy.x(), rpy.y()));
    }
  }
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      MISlices::Surface surface{a, b, {}};
      for (int ka = -counts[a]; ka <= counts[a]; ++ka) {
        for (int kb = -counts[b]; kb <= counts[b]; ++kb) {
          Theta t = out.center;
          t[a] = out.center[a] + ka * config.step[a];
          t[b] = out.center[b] + kb * config.step[b];
          surface.cells.push_back(evaluator.evaluate(t, rpy.x(), rpy.y()));
        }
      }
      out.surfaces.push_back(std::move(surface));
    }
  }
  bool any_valid = false;
  for (const auto& l : out.line) {
    for (const auto& e : l) any_valid = any_valid || e.valid;
  }
  if (!any_valid) throw MIFailure("mi_slices: no valid evaluation around the initial pose");
  return out;
}

inline MISlices mi_slices(const CameraPose& init, const GridSearchConfig& config, const GrayImage& image,
                          const CameraIntrinsics& intrinsics, const LidarGroundMap& map) {
  const auto points = select_points(map, init, config);
  return mi_slices(init, config, image, intrinsics, std::span<const LidarPoint>(points));
}

inline const char* kMICsvHeader = "x,y,z,psi,n,H_X,H_Y,H_XY,MI\n";

inline std::string format_mi_row(const MIEvaluation& e) {
  return format_double(e.theta.x) + "," + format_double(e.theta.y) + "," + format_double(e.theta.z) + "," +
         format_double(e.theta.yaw) + "," + std::to_string(e.n_points) + "," + format_double(e.h_x) + "," +
         format_double(e.h_y) + "," + format_double(e.h_xy) + "," + (e.valid ? format_double(e.mi) : "-inf") + "\n";
}

inline std::string format_mi_csv(std::span<const MIEvaluation> cells) {
  std::string out = kMICsvHeader;
  for (const auto& e : cells) out += format_mi_row(e);
  return out;
}

}  // namespace fishloc
