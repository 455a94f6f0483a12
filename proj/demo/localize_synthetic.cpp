// End-to-end localization on a procedural scene: PnP initialization, MI
// refinement, and check-point reprojection error of both estimates.

#include <cstdlib>
#include <iostream>

#include "fishloc/fishloc.hpp"

using namespace fishloc;

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

  const SyntheticScene scene = generate_scene(seed);
  const GrayImage image = render_fisheye(scene);

  FabricationOptions fab;
  fab.seed = seed;
  const SyntheticMatches m = fabricate_correspondences(scene, fab);
  const auto lifted = lift_correspondences(m.matches, m.crop, scene.map.lidar);
  RansacOptions ransac;
  ransac.seed = seed;
  const PnPResult pnp = ransac_pnp(to_pnp_pairs(lifted), m.spec, ransac);
  std::cout << "PnP inliers: " << pnp.inliers.size() << "/" << m.matches.size() << "\n";

  const GridSearchResult mi = grid_search(pnp.pose, GridSearchConfig{}, image, scene.intrinsics, scene.map.lidar);
  std::cout << "MI: " << mi.initial.mi << " -> " << mi.best.mi << " nats\n";

  const auto report = reprojection_report(scene.intrinsics, {{"PnP", pnp.pose}, {"MI", mi.pose}},
                                          synthetic_check_points(scene, 30));
  std::cout << format_report_summary(report);
  return 0;
}
