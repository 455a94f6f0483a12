#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fishloc/error.hpp"
#include "fishloc/image.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Intrinsics of the unified omnidirectional (Mei) camera: pinhole K with
/// skew, plumb-bob distortion D = [k1, k2, p1, p2] and mirror parameter xi.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double s = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double k1 = 0.0;
  double k2 = 0.0;
  double p1 = 0.0;
  double p2 = 0.0;
  double xi = 0.0;
  int width = 0;
  int height = 0;

  bool operator==(const CameraIntrinsics&) const = default;

  void validate() const {
    const double values[] = {fx, fy, s, cx, cy, k1, k2, p1, p2, xi};
    for (double v : values) {
      if (!std::isfinite(v)) throw InputError("intrinsics contain a non-finite value");
    }
    if (fx <= 0.0 || fy <= 0.0) throw InputError("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
    if (xi < 0.0) throw InputError("intrinsics: xi must be non-negative");
    if (cx < 0.0 || cy < 0.0 || cx > width - 1.0 || cy > height - 1.0) {
      throw InputError("intrinsics: principal point lies outside the image");
    }
  }
};

/// Rigid world-to-camera transform P_C = R * P_W + t.
///
/// Euler angles are measured relative to a nadir-looking reference frame
/// (camera x = world +x, camera y = world -y, camera z = world -z) so that a
/// downward-looking camera has roll = pitch = 0 and yaw is the rotation about
/// its principal axis. The camera orientation in the world is
/// Rz(yaw) * Ry(pitch) * Rx(roll) * diag(1, -1, -1).
class CameraPose {
 public:
  CameraPose() = default;

  CameraPose(const Mat3& rotation, const Vec3& translation) : rotation_(rotation), translation_(translation) {
    if (!rotation.allFinite() || !translation.allFinite()) throw InputError("pose contains a non-finite value");
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
        std::abs(rotation.determinant() - 1.0) > 1e-6) {
      throw InputError("pose rotation is not a proper orthonormal matrix");
    }
  }

  static Mat3 nadir_frame() { return Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal(); }

  static Mat3 world_from_camera_rotation(double roll, double pitch, double yaw) {
    const Mat3 rz = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    const Mat3 ry = Eigen::AngleAxisd(pitch, Vec3::UnitY()).toRotationMatrix();
    const Mat3 rx = Eigen::AngleAxisd(roll, Vec3::UnitX()).toRotationMatrix();
    return rz * ry * rx * nadir_frame();
  }

  /// Pose of a camera centred at `center` (world frame, meters).
  static CameraPose from_center_rpy(const Vec3& center, double roll, double pitch, double yaw) {
    CameraPose pose;
    pose.rotation_ = world_from_camera_rotation(roll, pitch, yaw).transpose();
    pose.translation_ = -(pose.rotation_ * center);
    return pose;
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 center() const { return -(rotation_.transpose() * translation_); }

  /// [roll, pitch, yaw] in radians.
  Vec3 rpy() const {
    const Mat3 m = rotation_.transpose() * nadir_frame();
    const double pitch = std::asin(std::clamp(-m(2, 0), -1.0, 1.0));
    const double roll = std::atan2(m(2, 1), m(2, 2));
    const double yaw = std::atan2(m(1, 0), m(0, 0));
    return {roll, pitch, yaw};
  }

  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

  Vec3 to_camera(const Vec3& point_world) const { return rotation_ * point_world + translation_; }

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Projection cutoff on (z_s + xi).
inline constexpr double kProjectionEpsilon = 1e-9;
inline constexpr int kUndistortMaxIterations = 20;
inline constexpr double kUndistortTolerance = 1e-10;

/// Squared normalized radius beyond which the radial distortion polynomial
/// r * (1 + k1 r^2 + k2 r^4) stops being monotonic (infinity if it never does).
inline double radial_monotonic_limit(double k1, double k2) {
  // d/dr [r (1 + k1 s + k2 s^2)] = 1 + 3 k1 s + 5 k2 s^2 with s = r^2.
  const double a = 5.0 * k2, b = 3.0 * k1, c = 1.0;
  double limit = std::numeric_limits<double>::infinity();
  if (std::abs(a) < 1e-300) {
    if (b < 0.0) limit = -c / b;
    return limit;
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return limit;
  const double sq = std::sqrt(disc);
  for (double root : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
    if (root > 0.0) limit = std::min(limit, root);
  }
  return limit;
}

/// Jacobian of the plumb-bob distortion at normalized point (mx, my).
inline Eigen::Matrix2d distortion_jacobian(const CameraIntrinsics& k, double x, double y) {
  const double r2 = x * x + y * y;
  const double radial = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
  const double dradial = 2.0 * (k.k1 + 2.0 * k.k2 * r2);  // d(radial)/dx = x * dradial
  Eigen::Matrix2d jac;
  jac(0, 0) = radial + x * x * dradial + 2.0 * k.p1 * y + 6.0 * k.p2 * x;
  jac(0, 1) = x * y * dradial + 2.0 * k.p1 * x + 2.0 * k.p2 * y;
  jac(1, 0) = jac(0, 1);
  jac(1, 1) = radial + y * y * dradial + 6.0 * k.p1 * y + 2.0 * k.p2 * x;
  return jac;
}

/// True where the distortion map has folded over (non-positive Jacobian).
/// Tangential terms can fold it inside the radial monotonic limit.
inline bool distortion_folded(const CameraIntrinsics& k, double mx, double my) {
  return !(distortion_jacobian(k, mx, my).determinant() > 0.0);
}

/// Forward model bound to one set of intrinsics; the hot-path entry point.
/// Largest r^2 such that the distortion minus the identity has Lipschitz
/// constant at most 1/2 on the disk r^2 <= bound. The map is one-to-one there.
inline double distortion_contraction_r2(const CameraIntrinsics& k) {
  const auto lipschitz = [&](double r) {
    return 3.0 * std::abs(k.k1) * r * r + 5.0 * std::abs(k.k2) * r * r * r * r +
           12.0 * (std::abs(k.p1) + std::abs(k.p2)) * r;
  };
  double lo = 0.0, hi = 1e3;
  if (lipschitz(hi) <= 0.5) return hi * hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (lipschitz(mid) <= 0.5 ? lo : hi) = mid;
  }
  return lo * lo;
}

class FisheyeProjector {
 public:
  explicit FisheyeProjector(const CameraIntrinsics& intrinsics)
      : k_(intrinsics),
        r2_limit_(radial_monotonic_limit(intrinsics.k1, intrinsics.k2)),
        distorted_(intrinsics.k1 != 0.0 || intrinsics.k2 != 0.0 || intrinsics.p1 != 0.0 || intrinsics.p2 != 0.0),
        r2_contraction_(distortion_contraction_r2(intrinsics)) {}

  const CameraIntrinsics& intrinsics() const { return k_; }
  double r2_limit() const { return r2_limit_; }

  /// Camera-frame point to pixel, without the image-bounds test.
  bool project_unbounded(const Vec3& pc, Vec2& pixel) const {
    const double norm = pc.norm();
    if (!(norm > 0.0)) return false;
    // denom = norm * (z_s + xi), with z_s = z / norm on the unit sphere.
    const double denom = pc.z() + k_.xi * norm;
    if (denom <= kProjectionEpsilon * norm) return false;
    // Past z_s = -1/xi the sphere-to-plane map folds back on itself.
    if (norm + k_.xi * pc.z() <= 0.0) return false;
    const double inv = 1.0 / denom;
    const double mx = pc.x() * inv, my = pc.y() * inv;
    const double r2 = mx * mx + my * my;
    if (r2 >= r2_limit_ || !distortion_invertible(mx, my)) return false;
    const Vec2 md = distort(mx, my);
    pixel.x() = k_.fx * md.x() + k_.s * md.y() + k_.cx;
    pixel.y() = k_.fy * md.y() + k_.cy;
    return true;
  }

  bool project(const Vec3& pc, Vec2& pixel) const {
    if (!project_unbounded(pc, pixel)) return false;
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= k_.width - 1.0 && pixel.y() <= k_.height - 1.0;
  }

  /// True where undistort recovers (mx, my) from its distorted image. Past
  /// that region the distortion is no longer one-to-one (a fold, or a second
  /// sheet reached first by the inversion) and the point is treated as out of view.
  bool distortion_invertible(double mx, double my) const {
    if (!distorted_ || mx * mx + my * my <= r2_contraction_) return true;
    if (distortion_folded(k_, mx, my)) return false;
    Vec2 back;
    if (!try_undistort(distort(mx, my), back)) return false;
    return (back - Vec2(mx, my)).norm() <= 1e-8 * (1.0 + std::hypot(mx, my));
  }

  Vec2 distort(double mx, double my) const {
    const double r2 = mx * mx + my * my;
    const double radial = 1.0 + k_.k1 * r2 + k_.k2 * r2 * r2;
    return {mx * radial + 2.0 * k_.p1 * mx * my + k_.p2 * (r2 + 2.0 * mx * mx),
            my * radial + k_.p1 * (r2 + 2.0 * my * my) + 2.0 * k_.p2 * mx * my};
  }

  /// Inverts the distortion with Newton steps on the 2x2 Jacobian.
  Vec2 undistort(const Vec2& md) const {
    Vec2 m;
    if (!try_undistort(md, m)) throw ConvergenceError("distortion inversion did not converge");
    return m;
  }

  bool try_undistort(const Vec2& md, Vec2& m) const {
    m = md;
    for (int it = 0; it < kUndistortMaxIterations; ++it) {
      const Vec2 residual = distort(m.x(), m.y()) - md;
      if (residual.cwiseAbs().maxCoeff() < kUndistortTolerance) return true;
      const Eigen::Matrix2d jac = distortion_jacobian(k_, m.x(), m.y());
      const double det = jac.determinant();
      if (!(std::abs(det) > 1e-15)) break;
      m -= jac.inverse() * residual;
      if (!m.allFinite()) return false;
    }
    return (distort(m.x(), m.y()) - md).cwiseAbs().maxCoeff() < kUndistortTolerance;
  }

  /// Pixel to unit ray in the camera frame.
  Vec3 unproject(const Vec2& pixel) const {
    if (!(pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() <= k_.width - 1.0 && pixel.y() <= k_.height - 1.0)) {
      throw DomainError("unproject: pixel outside the image");
    }
    return unproject_unbounded(pixel);
  }

  Vec3 unproject_unbounded(const Vec2& pixel) const {
    Vec3 ray;
    switch (lift(pixel, ray)) {
      case Lift::kOk:
        return ray;
      case Lift::kNoConvergence:
        throw ConvergenceError("distortion inversion did not converge");
      case Lift::kBeyondMonotonic:
        throw DomainError("unproject: pixel beyond the monotonic distortion range");
      case Lift::kOutsideCone:
        break;
    }
    throw DomainError("unproject: pixel outside the model's valid cone");
  }

  /// Non-throwing unprojection; false when the pixel has no ray.
  bool try_unproject(const Vec2& pixel, Vec3& ray) const { return lift(pixel, ray) == Lift::kOk; }

 private:
  enum class Lift { kOk, kNoConvergence, kBeyondMonotonic, kOutsideCone };

  Lift lift(const Vec2& pixel, Vec3& ray) const {
    const double mdy = (pixel.y() - k_.cy) / k_.fy;
    const double mdx = (pixel.x() - k_.cx - k_.s * mdy) / k_.fx;
    Vec2 m;
    if (!try_undistort({mdx, mdy}, m)) return Lift::kNoConvergence;
    const double r2 = m.squaredNorm();
    if (r2 >= r2_limit_ || distortion_folded(k_, m.x(), m.y())) return Lift::kBeyondMonotonic;
    const double disc = 1.0 + (1.0 - k_.xi * k_.xi) * r2;
    if (disc < 0.0) return Lift::kOutsideCone;
    const double factor = (k_.xi + std::sqrt(disc)) / (r2 + 1.0);
    ray = Vec3(factor * m.x(), factor * m.y(), factor - k_.xi).normalized();
    return Lift::kOk;
  }

  CameraIntrinsics k_;
  double r2_limit_;
  bool distorted_;
  double r2_contraction_;
};

/// World point to fisheye pixel; empty when not projectable or out of the image.
inline std::optional<Vec2> project(const CameraIntrinsics& intrinsics, const CameraPose& pose, const Vec3& point_world) {
  Vec2 px;
  if (!FisheyeProjector(intrinsics).project(pose.to_camera(point_world), px)) return std::nullopt;
  return px;
}

inline Vec3 unproject(const CameraIntrinsics& intrinsics, const Vec2& pixel) {
  return FisheyeProjector(intrinsics).unproject(pixel);
}

/// Ideal pinhole camera (square pixels, no skew, no distortion).
struct PinholeCamera {
  double focal = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool project(const Vec3& pc, Vec2& pixel) const {
    if (pc.z() <= kProjectionEpsilon) return false;
    pixel = {focal * pc.x() / pc.z() + cx, focal * pc.y() / pc.z() + cy};
    return true;
  }

  bool in_image(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 && px.y() <= height - 1.0;
  }

  /// Un-normalized ray (z = 1) through a pixel.
  Vec3 ray(const Vec2& pixel) const { return {(pixel.x() - cx) / focal, (pixel.y() - cy) / focal, 1.0}; }
};

/// Virtual perspective camera sharing the fisheye optical center.
/// `rotation` maps virtual-frame directions into the fisheye camera frame.
struct RectificationSpec {
  double focal = 0.0;
  int width = 0;
  int height = 0;
  Mat3 rotation = Mat3::Identity();

  /// focal = fx / 2, same size as the fisheye image, axis aligned.
  static RectificationSpec default_for(const CameraIntrinsics& intrinsics) {
    return {intrinsics.fx / 2.0, intrinsics.width, intrinsics.height, Mat3::Identity()};
  }

  /// Spec with a given horizontal field of view in radians.
  static RectificationSpec with_fov(double horizontal_fov, int width, int height, const Mat3& rotation = Mat3::Identity()) {
    return {(width / 2.0) / std::tan(horizontal_fov / 2.0), width, height, rotation};
  }

  PinholeCamera camera() const { return {focal, (width - 1) / 2.0, (height - 1) / 2.0, width, height}; }

  double horizontal_fov() const { return 2.0 * std::atan((width / 2.0) / focal); }

  void validate() const {
    if (!(focal > 0.0) || !std::isfinite(focal)) throw InputError("rectification: focal length must be positive");
    if (width <= 0 || height <= 0) throw InputError("rectification: image size must be positive");
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(rotation.determinant() - 1.0) > 1e-9) {
      throw InputError("rectification: rotation is not orthonormal");
    }
  }

  /// Pose of the virtual camera given the fisheye pose.
  CameraPose virtual_pose(const CameraPose& fisheye) const {
    return {rotation.transpose() * fisheye.rotation(), rotation.transpose() * fisheye.translation()};
  }

  /// Pose of the fisheye camera given the virtual camera pose.
  CameraPose fisheye_pose(const CameraPose& virtual_camera) const {
    return {rotation * virtual_camera.rotation(), rotation * virtual_camera.translation()};
  }
};

/// Per-pixel source coordinates in the fisheye image for a virtual view.
struct RectificationMap {
  int width = 0;
  int height = 0;
  int source_width = 0;
  int source_height = 0;
  std::vector<Vec2> source;
  std::vector<std::uint8_t> valid;

  std::size_t index(int u, int v) const { return static_cast<std::size_t>(v) * width + u; }
};

inline RectificationMap build_rectification_map(const CameraIntrinsics& intrinsics, const RectificationSpec& spec) {
  intrinsics.validate();
  spec.validate();
  const FisheyeProjector projector(intrinsics);
  const PinholeCamera pinhole = spec.camera();
  RectificationMap map;
  map.width = spec.width;
  map.height = spec.height;
  map.source_width = intrinsics.width;
  map.source_height = intrinsics.height;
  map.source.assign(static_cast<std::size_t>(spec.width) * spec.height, Vec2::Zero());
  map.valid.assign(map.source.size(), 0);
  for (int v = 0; v < spec.height; ++v) {
    for (int u = 0; u < spec.width; ++u) {
      const Vec3 ray = spec.rotation * pinhole.ray(Vec2(static_cast<double>(u), static_cast<double>(v)));
      Vec2 px;
      if (projector.project(ray, px)) {
        map.source[map.index(u, v)] = px;
        map.valid[map.index(u, v)] = 1;
      }
    }
  }
  return map;
}

inline std::uint8_t to_gray_level(double value) {
  if (!(value >= 0.5)) return 0;
  if (value >= 254.5) return 255;
  return static_cast<std::uint8_t>(static_cast<int>(value + 0.5));
}

/// Bilinear resampling through a lookup table; unmapped pixels become 0.
inline GrayImage rectify_image(const GrayImage& fisheye, const RectificationMap& map) {
  if (fisheye.width() != map.source_width || fisheye.height() != map.source_height) {
    throw InputError("rectify: image is " + std::to_string(fisheye.width()) + "x" + std::to_string(fisheye.height()) +
                     " but the lookup table expects " + std::to_string(map.source_width) + "x" +
                     std::to_string(map.source_height));
  }
  GrayImage out(map.width, map.height, 0);
  for (int v = 0; v < map.height; ++v) {
    for (int u = 0; u < map.width; ++u) {
      const auto i = map.index(u, v);
      if (!map.valid[i]) continue;
      out.at(u, v) = to_gray_level(fisheye.bilinear(map.source[i].x(), map.source[i].y()));
    }
  }
  return out;
}

// --- intrinsics file -------------------------------------------------------

/// Parses `key: value` (or `key = value`) lines; '#' starts a comment.
inline CameraIntrinsics parse_intrinsics(const std::string& text, const std::string& source = "intrinsics") {
  std::map<std::string, double> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    auto sep = body.find(':');
    if (sep == std::string_view::npos) sep = body.find('=');
    if (sep == std::string_view::npos) {
      throw InputError(source + ":" + std::to_string(line_no) + ": expected 'key: value'");
    }
    const std::string key(trim(body.substr(0, sep)));
    values[key] = parse_double(body.substr(sep + 1), source + ": field '" + key + "'");
  }
  const auto get = [&](const char* key) {
    const auto it = values.find(key);
    if (it == values.end()) throw InputError(source + ": missing field '" + std::string(key) + "'");
    return it->second;
  };
  const auto get_int = [&](const char* key) {
    const double v = get(key);
    if (v != std::floor(v) || v <= 0 || v > 1e6) throw InputError(source + ": field '" + std::string(key) + "' must be a positive integer");
    return static_cast<int>(v);
  };
  CameraIntrinsics k;
  k.fx = get("fx");
  k.fy = get("fy");
  k.s = get("s");
  k.cx = get("cx");
  k.cy = get("cy");
  k.k1 = get("k1");
  k.k2 = get("k2");
  k.p1 = get("p1");
  k.p2 = get("p2");
  k.xi = get("xi");
  k.width = get_int("width");
  k.height = get_int("height");
  for (const auto& [key, _] : values) {
    static const char* known[] = {"fx", "fy", "s", "cx", "cy", "k1", "k2", "p1", "p2", "xi", "width", "height"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* kk) { return key == kk; }) == std::end(known)) {
      throw InputError(source + ": unknown field '" + key + "'");
    }
  }
  k.validate();
  return k;
}

inline CameraIntrinsics read_intrinsics(const std::string& path) { return parse_intrinsics(read_text_file(path), path); }

inline std::string format_intrinsics(const CameraIntrinsics& k) {
  std::ostringstream out;
  out << "fx: " << format_double(k.fx) << "\nfy: " << format_double(k.fy) << "\ns: " << format_double(k.s)
      << "\ncx: " << format_double(k.cx) << "\ncy: " << format_double(k.cy) << "\nk1: " << format_double(k.k1)
      << "\nk2: " << format_double(k.k2) << "\np1: " << format_double(k.p1) << "\np2: " << format_double(k.p2)
      << "\nxi: " << format_double(k.xi) << "\nwidth: " << k.width << "\nheight: " << k.height << "\n";
  return out.str();
}

inline void write_intrinsics(const CameraIntrinsics& k, const std::string& path) {
  write_text_file(path, format_intrinsics(k));
}

}  // namespace fishloc
