#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fishloc/camera_model.hpp"
#include "fishloc/error.hpp"
#include "fishloc/prior_map.hpp"
#include "fishloc/text_io.hpp"

namespace fishloc {

/// One match between the rectified fisheye image and the cropped satellite raster.
struct Correspondence {
  Vec2 rectified = Vec2::Zero();
  Vec2 satellite = Vec2::Zero();
  std::optional<bool> true_inlier;  // known only for fabricated matches
};

using CorrespondenceSet = std::vector<Correspondence>;

/// 2D pixel in the rectified image paired with a 3D world point.
struct PnPPair {
  Vec2 pixel = Vec2::Zero();
  Vec3 world = Vec3::Zero();
};

struct LiftedPair : PnPPair {
  bool height_fallback = false;  // no LiDAR support, z set to 0
};

/// Satellite pixels to world points: (x, y) from georeferencing, z from the
/// LiDAR height map (0 when the lookup has no support).
inline std::vector<LiftedPair> lift_correspondences(const CorrespondenceSet& matches, const SatelliteMap& sat,
                                                    const LidarGroundMap& lidar) {
  if (matches.empty()) throw InputError("lift_correspondences: no matches");
  std::vector<LiftedPair> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    if (!m.rectified.allFinite() || !m.satellite.allFinite()) throw InputError("correspondence with non-finite coordinates");
    LiftedPair lp;
    lp.pixel = m.rectified;
    const Vec2 xy = sat_pixel_to_world(sat, m.satellite);
    double z = 0.0;
    try {
      z = ground_height_at(lidar, xy);
    } catch (const DomainError&) {
      lp.height_fallback = true;
    }
    lp.world = {xy.x(), xy.y(), z};
    out.push_back(lp);
  }
  return out;
}

inline std::vector<PnPPair> to_pnp_pairs(const std::vector<LiftedPair>& lifted) {
  return {lifted.begin(), lifted.end()};
}

namespace detail {

/// Polynomial coefficients in ascending order of degree.
using Poly = std::vector<double>;

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  }
  return r;
}

inline Poly poly_add(const Poly& a, const Poly& b, double scale_b = 1.0) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] += scale_b * b[i];
  return r;
}

inline double poly_eval(const Poly& p, double x) {
  double acc = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) acc = acc * x + *it;
  return acc;
}

/// Real roots through the companion matrix, each polished by Newton steps.
inline std::vector<double> real_roots(Poly p) {
  const double scale = *std::max_element(p.begin(), p.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
  if (scale == 0.0) return {};
  for (auto& c : p) c /= std::abs(scale);
  while (p.size() > 1 && std::abs(p.back()) < 1e-14) p.pop_back();
  const int degree = static_cast<int>(p.size()) - 1;
  if (degree < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -p[degree - 1 - i] / p[degree];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  const Eigen::VectorXcd eig = Eigen::EigenSolver<Eigen::MatrixXd>(companion, false).eigenvalues();
  Poly dp(std::max(1, degree), 0.0);
  for (int i = 1; i <= degree; ++i) dp[i - 1] = i * p[i];
  std::vector<double> roots;
  for (int i = 0; i < eig.size(); ++i) {
    if (std::abs(eig[i].imag()) > 1e-6 * (1.0 + std::abs(eig[i].real()))) continue;
    double x = eig[i].real();
    for (int it = 0; it < 5; ++it) {
      const double d = poly_eval(dp, x);
      if (d == 0.0) break;
      const double step = poly_eval(p, x) / d;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

inline double skew_area(const Vec3& a, const Vec3& b, const Vec3& c) { return 0.5 * (b - a).cross(c - a).norm(); }

/// Rigid transform (R, t) minimizing sum |R * src_i + t - dst_i|^2.
inline CameraPose align_points(const std::array<Vec3, 3>& src, const std::array<Vec3, 3>& dst) {
  const Vec3 sc = (src[0] + src[1] + src[2]) / 3.0;
  const Vec3 dc = (dst[0] + dst[1] + dst[2]) / 3.0;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) h += (src[i] - sc) * (dst[i] - dc).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return {r, dc - r * sc};
}

}  // namespace detail

/// Pixel distance between the projection of `world` and `pixel`; +inf when
/// the point is behind the camera.
inline double reprojection_error(const CameraPose& pose, const PinholeCamera& camera, const PnPPair& pair) {
  Vec2 px;
  if (!camera.project(pose.to_camera(pair.world), px)) return std::numeric_limits<double>::infinity();
  return (px - pair.pixel).norm();
}

inline constexpr double kMinTriangleArea = 1e-6;

/// Minimal three-point resection. Returns every real solution whose three
/// reprojections agree with the input pixels to 1e-6 px.
inline std::vector<CameraPose> p3p_solve(const std::array<PnPPair, 3>& pairs, const PinholeCamera& camera) {
  const Vec3& w1 = pairs[0].world;
  const Vec3& w2 = pairs[1].world;
  const Vec3& w3 = pairs[2].world;
  if (detail::skew_area(w1, w2, w3) <= kMinTriangleArea) {
    throw DegenerateError("p3p: world points are (nearly) collinear");
  }
  std::array<Vec3, 3> rays;
  for (int i = 0; i < 3; ++i) rays[i] = camera.ray(pairs[i].pixel).normalized();

  // Distances between world points, named after the opposite vertex.
  const double a2 = (w2 - w3).squaredNorm();
  const double b2 = (w1 - w3).squaredNorm();
  const double c2 = (w1 - w2).squaredNorm();
  const double cos_alpha = rays[1].dot(rays[2]);
  const double cos_beta = rays[0].dot(rays[2]);
  const double cos_gamma = rays[0].dot(rays[1]);

  // With s2 = u s1, s3 = v s1 the law of cosines gives u = N(v) / D(v) and
  // the quartic N^2 - 2 cos_gamma N D + (1 - c2/b2 Q) D^2 = 0 in v.
  const double k = (a2 - c2) / b2;
  const detail::Poly q = {1.0, -2.0 * cos_beta, 1.0};
  const detail::Poly n = {1.0 + k, -2.0 * k * cos_beta, k - 1.0};
  const detail::Poly d = {2.0 * cos_gamma, -2.0 * cos_alpha};
  const detail::Poly one_minus_cq = detail::poly_add({1.0}, q, -c2 / b2);
  detail::Poly quartic = detail::poly_mul(n, n);
  quartic = detail::poly_add(quartic, detail::poly_mul(n, d), -2.0 * cos_gamma);
  quartic = detail::poly_add(quartic, detail::poly_mul(one_minus_cq, detail::poly_mul(d, d)));

  std::vector<CameraPose> poses;
  for (double v : detail::real_roots(quartic)) {
    const double qv = detail::poly_eval(q, v);
    if (v <= 0.0 || qv <= 0.0) continue;
    const double s1 = std::sqrt(b2 / qv);
    std::vector<double> us;
    const double denom = detail::poly_eval(d, v);
    if (std::abs(denom) > 1e-6) us.push_back(detail::poly_eval(n, v) / denom);
    // Near a common zero of N and D (e.g. a symmetric triangle on the optical
    // axis) u = N / D is ill-conditioned: take u from the c-side law of
    // cosines instead and keep the roots that satisfy the a-side one.
    const double disc = cos_gamma * cos_gamma - 1.0 + c2 / (s1 * s1);
    if (std::abs(denom) <= 1e-3 && disc >= 0.0) {
      for (double sign : {-1.0, 1.0}) {
        const double u = cos_gamma + sign * std::sqrt(disc);
        const double a_side = s1 * s1 * (u * u + v * v - 2.0 * u * v * cos_alpha);
        if (std::abs(a_side - a2) <= 1e-6 * a2) us.push_back(u);
      }
    }
    for (double u : us) {
      if (u <= 0.0) continue;
      const std::array<Vec3, 3> cam = {s1 * rays[0], u * s1 * rays[1], v * s1 * rays[2]};
      CameraPose pose;
      try {
        pose = detail::align_points({w1, w2, w3}, cam);
      } catch (const InputError&) {
        continue;
      }
      bool ok = true;
      for (const auto& p : pairs) ok = ok && reprojection_error(pose, camera, p) < 1e-6;
      if (ok) poses.push_back(pose);
    }
  }
  return poses;
}

struct RansacOptions {
  double threshold = 2.0;
  double confidence = 0.999;
  int max_iterations = 2000;
  std::uint64_t seed = 0;
};

struct PnPResult {
  CameraPose pose;          // fisheye camera
  CameraPose virtual_pose;  // rectified pinhole camera
  std::vector<std::size_t> inliers;
  double mean_error = 0.0;  // pixels, rectified image, over inliers
  int iterations = 0;
};

struct RefineOptions {
  int max_iterations = 50;
  double gradient_tolerance = 1e-10;
};

/// Levenberg-Marquardt on pinhole reprojection error; the rotation is
/// updated by a tangent 3-vector composed on the left.
inline CameraPose refine_pose(const CameraPose& initial, const PinholeCamera& camera, const std::vector<PnPPair>& pairs,
                              const RefineOptions& options = {}) {
  using Vec6 = Eigen::Matrix<double, 6, 1>;
  using Mat6 = Eigen::Matrix<double, 6, 6>;
  Mat3 r = initial.rotation();
  Vec3 t = initial.translation();

  const auto cost_of = [&](const Mat3& rot, const Vec3& tr) {
    double cost = 0.0;
    for (const auto& p : pairs) {
      const Vec3 pc = rot * p.world + tr;
      if (pc.z() <= kProjectionEpsilon) return std::numeric_limits<double>::infinity();
      const Vec2 px(camera.focal * pc.x() / pc.z() + camera.cx, camera.focal * pc.y() / pc.z() + camera.cy);
      cost += (px - p.pixel).squaredNorm();
    }
    return cost;
  };

  double cost = cost_of(r, t);
  double lambda = 1e-3;
  for (int it = 0; it < options.max_iterations && std::isfinite(cost); ++it) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& p : pairs) {
      const Vec3 rx = r * p.world;
      const Vec3 pc = rx + t;
      const double iz = 1.0 / pc.z();
      const Vec2 px(camera.focal * pc.x() * iz + camera.cx, camera.focal * pc.y() * iz + camera.cy);
      const Vec2 res = px - p.pixel;
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << camera.focal * iz, 0.0, -camera.focal * pc.x() * iz * iz, 0.0, camera.focal * iz,
          -camera.focal * pc.y() * iz * iz;
      Mat3 skew;
      skew << 0.0, -rx.z(), rx.y(), rx.z(), 0.0, -rx.x(), -rx.y(), rx.x(), 0.0;
      Eigen::Matrix<double, 2, 6> jac;
      jac.leftCols<3>() = -dpi * skew;
      jac.rightCols<3>() = dpi;
      h += jac.transpose() * jac;
      g += jac.transpose() * res;
    }
    if (g.cwiseAbs().maxCoeff() < options.gradient_tolerance) break;
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Mat6 damped = h;
      damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
      const Vec6 step = damped.ldlt().solve(-g);
      const Vec3 omega = step.head<3>();
      const double angle = omega.norm();
      const Mat3 dr = angle > 0.0 ? Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix() : Mat3::Identity();
      const Mat3 r_new = dr * r;
      const Vec3 t_new = t + step.tail<3>();
      const double new_cost = cost_of(r_new, t_new);
      if (new_cost < cost) {
        r = r_new;
        t = t_new;
        improved = true;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  const Eigen::Quaterniond q = Eigen::Quaterniond(r).normalized();
  return {q.toRotationMatrix(), t};
}

namespace detail {

struct Score {
  std::size_t inliers = 0;
  double mean_error = std::numeric_limits<double>::infinity();

  bool better_than(const Score& o) const {
    if (inliers != o.inliers) return inliers > o.inliers;
    return mean_error < o.mean_error;
  }
};

inline Score score_pose(const CameraPose& pose, const PinholeCamera& camera, const std::vector<PnPPair>& pairs,
                        double threshold, std::vector<std::size_t>* inliers = nullptr) {
  Score s;
  double sum = 0.0;
  if (inliers) inliers->clear();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double e = reprojection_error(pose, camera, pairs[i]);
    if (e <= threshold) {
      ++s.inliers;
      sum += e;
      if (inliers) inliers->push_back(i);
    }
  }
  if (s.inliers > 0) s.mean_error = sum / static_cast<double>(s.inliers);
  return s;
}

}  // namespace detail

/// Hypothesize-and-verify PnP on the virtual rectified camera. The returned
/// `pose` is the fisheye camera pose obtained by undoing the rectification
/// rotation.
inline PnPResult ransac_pnp(const std::vector<PnPPair>& pairs, const RectificationSpec& spec,
                            const RansacOptions& options = {}) {
  if (pairs.size() < 4) throw InputError("ransac_pnp: need at least 4 correspondences, got " + std::to_string(pairs.size()));
  if (!(options.threshold > 0.0) || !(options.confidence > 0.0 && options.confidence < 1.0) || options.max_iterations < 1) {
    throw InputError("ransac_pnp: invalid options");
  }
  spec.validate();
  const PinholeCamera camera = spec.camera();
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);

  detail::Score best;
  std::optional<CameraPose> best_pose;
  long needed = options.max_iterations;
  int iterations = 0;
  for (; iterations < options.max_iterations && iterations < needed; ++iterations) {
    std::size_t i0 = pick(rng), i1 = pick(rng), i2 = pick(rng);
    while (i1 == i0) i1 = pick(rng);
    while (i2 == i0 || i2 == i1) i2 = pick(rng);
    std::vector<CameraPose> candidates;
    try {
      candidates = p3p_solve({pairs[i0], pairs[i1], pairs[i2]}, camera);
    } catch (const DegenerateError&) {
      continue;
    }
    for (const auto& cand : candidates) {
      const auto s = detail::score_pose(cand, camera, pairs, options.threshold);
      if (s.better_than(best)) {
        best = s;
        best_pose = cand;
        const double w = static_cast<double>(best.inliers) / static_cast<double>(pairs.size());
        const double all_inlier = w * w * w;
        if (all_inlier >= 1.0) {
          needed = 0;
        } else if (all_inlier > 0.0) {
          needed = static_cast<long>(std::ceil(std::log(1.0 - options.confidence) / std::log(1.0 - all_inlier)));
        }
      }
    }
  }
  if (!best_pose || best.inliers < 4) {
    throw PnPFailure("ransac_pnp: no hypothesis with at least 4 inliers after " + std::to_string(iterations) +
                     " iterations (best: " + std::to_string(best.inliers) + " inliers of " +
                     std::to_string(pairs.size()) + ")");
  }

  // Refine on the consensus set until it stops changing.
  CameraPose pose = *best_pose;
  std::vector<std::size_t> inliers;
  detail::score_pose(pose, camera, pairs, options.threshold, &inliers);
  for (int round = 0; round < 5; ++round) {
    std::vector<PnPPair> subset;
    for (auto i : inliers) subset.push_back(pairs[i]);
    const CameraPose refined = refine_pose(pose, camera, subset);
    std::vector<std::size_t> refined_inliers;
    detail::score_pose(refined, camera, pairs, options.threshold, &refined_inliers);
    if (refined_inliers.size() < 4) break;
    pose = refined;
    const bool stable = refined_inliers == inliers;
    inliers = std::move(refined_inliers);
    if (stable) break;
  }
  PnPResult result;
  result.virtual_pose = pose;
  result.pose = spec.fisheye_pose(pose);
  result.mean_error = detail::score_pose(pose, camera, pairs, options.threshold, &result.inliers).mean_error;
  result.iterations = iterations;
  return result;
}

/// Correspondence CSV: `u_rect,v_rect,u_sat,v_sat`.
inline CorrespondenceSet read_correspondences(const std::string& path) {
  CorrespondenceSet out;
  for (const auto& r : read_numeric_csv(path, 4)) {
    Correspondence c;
    c.rectified = {r[0], r[1]};
    c.satellite = {r[2], r[3]};
    out.push_back(c);
  }
  return out;
}

inline std::string format_correspondences(const CorrespondenceSet& matches) {
  std::string out = "u_rect,v_rect,u_sat,v_sat\n";
  for (const auto& m : matches) {
    out += format_double(m.rectified.x()) + "," + format_double(m.rectified.y()) + "," +
           format_double(m.satellite.x()) + "," + format_double(m.satellite.y()) + "\n";
  }
  return out;
}

}  // namespace fishloc
