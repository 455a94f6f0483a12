#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/mi_registration.hpp"
#include "fishloc/pnp.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

using Json = nlohmann::ordered_json;

inline Json vec_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

/// Rotation (matrix, quaternion wxyz, roll/pitch/yaw), translation and
/// camera center. The matrix is the lossless field used on reload.
inline Json pose_to_json(const CameraPose& pose) {
  Json m = Json::array();
  for (int r = 0; r < 3; ++r) m.push_back(vec_to_json(pose.rotation().row(r).transpose()));
  const Eigen::Quaterniond q = pose.quaternion();
  return Json{{"rotation", {{"matrix", m}, {"quaternion_wxyz", {q.w(), q.x(), q.y(), q.z()}}, {"euler_rpy", vec_to_json(pose.rpy())}}},
              {"translation", vec_to_json(pose.translation())},
              {"camera_center", vec_to_json(pose.center())}};
}

inline CameraPose pose_from_json(const Json& j) {
  try {
    Mat3 r;
    const auto& m = j.at("rotation").at("matrix");
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) r(a, b) = m.at(a).at(b).get<double>();
    }
    const auto& t = j.at("translation");
    return {r, Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>())};
  } catch (const Json::exception& e) {
    throw InputError(std::string("pose JSON: ") + e.what());
  }
}

inline Json theta_to_json(const Theta& t) { return Json{{"x", t.x}, {"y", t.y}, {"z", t.z}, {"psi", t.yaw}}; }

inline Theta theta_from_json(const Json& j) {
  return {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(), j.at("psi").get<double>()};
}

inline Json evaluation_to_json(const MIEvaluation& e) {
  return Json{{"theta", theta_to_json(e.theta)}, {"n_points", e.n_points}, {"H_X", e.h_x}, {"H_Y", e.h_y},
              {"H_XY", e.h_xy},                  {"MI", e.valid ? Json(e.mi) : Json(nullptr)}, {"valid", e.valid}};
}

inline MIEvaluation evaluation_from_json(const Json& j) {
  MIEvaluation e;
  e.theta = theta_from_json(j.at("theta"));
  e.n_points = j.at("n_points").get<std::size_t>();
  e.h_x = j.at("H_X").get<double>();
  e.h_y = j.at("H_Y").get<double>();
  e.h_xy = j.at("H_XY").get<double>();
  e.valid = j.at("valid").get<bool>();
  e.mi = e.valid ? j.at("MI").get<double>() : -std::numeric_limits<double>::infinity();
  return e;
}

inline Json pnp_result_to_json(const PnPResult& r) {
  Json j = pose_to_json(r.pose);
  j["virtual_pose"] = pose_to_json(r.virtual_pose);
  j["inliers"] = r.inliers;
  j["n_inliers"] = r.inliers.size();
  j["mean_error"] = r.mean_error;
  j["iterations"] = r.iterations;
  return j;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

/// Pose JSON written by any command (the top level carries the pose fields).
inline CameraPose read_pose_json(const std::string& path) {
  try {
    return pose_from_json(read_json_file(path));
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace fishloc
