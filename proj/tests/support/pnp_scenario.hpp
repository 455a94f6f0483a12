#pragma once

#include <random>
#include <vector>

#include "fishloc/pnp.hpp"

namespace fishloc::testing {

/// Ground points seen by a nadir-ish virtual camera, with Gaussian pixel
/// noise and a fraction of pixels replaced by uniform random ones.
struct PnPScenario {
  CameraPose truth;
  RectificationSpec spec;
  std::vector<PnPPair> pairs;
  std::vector<bool> inlier;
};

inline PnPScenario make_pnp_scenario(std::uint64_t seed, std::size_t count, double outlier_fraction, double noise) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  PnPScenario s;
  s.spec.focal = 150.0;
  s.spec.width = s.spec.height = 640;
  s.truth = CameraPose::from_center_rpy({20.0 * unit(rng) - 10.0, 20.0 * unit(rng) - 10.0, 10.0 + 4.0 * unit(rng)},
                                        0.05 * (unit(rng) - 0.5), 0.05 * (unit(rng) - 0.5), 6.28 * unit(rng));
  const PinholeCamera cam = s.spec.camera();
  const Vec3 c = s.truth.center();
  while (s.pairs.size() < count) {
    const Vec3 w(c.x() + 40.0 * unit(rng) - 20.0, c.y() + 40.0 * unit(rng) - 20.0, 0.3 * unit(rng));
    Vec2 px;
    if (!cam.project(s.truth.to_camera(w), px) || !cam.in_image(px)) continue;
    s.pairs.push_back({px, w});
    s.inlier.push_back(true);
  }
  const auto n_out = static_cast<std::size_t>(outlier_fraction * static_cast<double>(count) + 0.5);
  for (std::size_t i = 0; i < count; ++i) {
    if (i < n_out) {
      s.pairs[i].pixel = {unit(rng) * (cam.width - 1), unit(rng) * (cam.height - 1)};
      s.inlier[i] = false;
    } else {
      s.pairs[i].pixel += noise * Vec2(gauss(rng), gauss(rng));
    }
  }
  return s;
}

inline double rotation_error(const CameraPose& a, const CameraPose& b) {
  return Eigen::AngleAxisd(a.rotation() * b.rotation().transpose()).angle();
}

}  // namespace fishloc::testing
