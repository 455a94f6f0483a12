#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/image.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

/// World point with its annotated fisheye pixel.
struct CheckPoint {
  Vec3 world;
  Vec2 pixel;
};

/// Check-point CSV: `x,y,z,u,v`.
inline std::vector<CheckPoint> read_check_points(const std::string& path) {
  std::vector<CheckPoint> out;
  for (const auto& r : read_numeric_csv(path, 5)) out.push_back({{r[0], r[1], r[2]}, {r[3], r[4]}});
  if (out.empty()) throw InputError(path + ": no check points");
  return out;
}

inline std::string format_check_points(const std::vector<CheckPoint>& points) {
  std::string out = "x,y,z,u,v\n";
  for (const auto& p : points) {
    out += format_double(p.world.x()) + "," + format_double(p.world.y()) + "," + format_double(p.world.z()) + "," +
           format_double(p.pixel.x()) + "," + format_double(p.pixel.y()) + "\n";
  }
  return out;
}

struct NamedPose {
  std::string name;
  CameraPose pose;
};

/// Pixel errors of every check point under each candidate pose. A point
/// that does not project (behind the camera, outside the image) counts as
/// infinite error.
struct ReprojectionReport {
  std::vector<std::string> names;
  std::vector<CheckPoint> points;
  std::vector<std::vector<double>> errors;  // [pose][point]
  std::vector<double> means;                // [pose]
};

inline ReprojectionReport reprojection_report(const CameraIntrinsics& intrinsics, const std::vector<NamedPose>& poses,
                                              const std::vector<CheckPoint>& points) {
  intrinsics.validate();
  if (points.empty()) throw InputError("reprojection report: no check points");
  const FisheyeProjector projector(intrinsics);
  ReprojectionReport report;
  report.points = points;
  for (const auto& candidate : poses) {
    report.names.push_back(candidate.name);
    std::vector<double> errs;
    double sum = 0.0;
    for (const auto& p : points) {
      Vec2 px;
      const double e = projector.project(candidate.pose.to_camera(p.world), px) ? (px - p.pixel).norm()
                                                                               : std::numeric_limits<double>::infinity();
      errs.push_back(e);
      sum += e;
    }
    report.means.push_back(sum / static_cast<double>(points.size()));
    report.errors.push_back(std::move(errs));
  }
  return report;
}

inline double mean_reprojection_error(const CameraIntrinsics& intrinsics, const CameraPose& pose,
                                      const std::vector<CheckPoint>& points) {
  return reprojection_report(intrinsics, {{"pose", pose}}, points).means.front();
}

/// Per-point table: `x,y,z,u,v,error_<name>...`.
inline std::string format_report_csv(const ReprojectionReport& report) {
  std::string out = "x,y,z,u,v";
  for (const auto& n : report.names) out += ",error_" + n;
  out += "\n";
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const auto& p = report.points[i];
    out += format_double(p.world.x()) + "," + format_double(p.world.y()) + "," + format_double(p.world.z()) + "," +
           format_double(p.pixel.x()) + "," + format_double(p.pixel.y());
    for (const auto& errs : report.errors) out += "," + format_double(errs[i]);
    out += "\n";
  }
  return out;
}

/// One line, e.g. "Average reprojection error: PnP = 20.52 pixel, MI = 9.12 pixel".
inline std::string format_report_summary(const ReprojectionReport& report) {
  std::string out = "Average reprojection error:";
  for (std::size_t k = 0; k < report.names.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", report.means[k]);
    out += (k == 0 ? " " : ", ") + report.names[k] + " = " + buf + " pixel";
  }
  return out + "\n";
}

/// Marks every projected point in `color` on an RGB copy of the image.
/// Returns the number of distinct marked pixels.
inline std::size_t draw_points(RgbImage& canvas, const CameraIntrinsics& intrinsics, const CameraPose& pose,
                               const std::vector<Vec3>& points, Rgb color = {0, 255, 255}) {
  const FisheyeProjector projector(intrinsics);
  std::vector<std::uint8_t> marked(static_cast<std::size_t>(canvas.width()) * canvas.height(), 0);
  std::size_t count = 0;
  for (const auto& p : points) {
    Vec2 px;
    if (!projector.project(pose.to_camera(p), px)) continue;
    const int u = static_cast<int>(std::lround(px.x())), v = static_cast<int>(std::lround(px.y()));
    if (u < 0 || v < 0 || u >= canvas.width() || v >= canvas.height()) continue;
    auto& m = marked[static_cast<std::size_t>(v) * canvas.width() + u];
    if (!m) {
      m = 1;
      ++count;
    }
    canvas.at(u, v) = color;
  }
  return count;
}

}  // namespace fishloc
