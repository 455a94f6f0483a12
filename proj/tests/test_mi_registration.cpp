#include <gtest/gtest.h>

#include "fishloc/mi_registration.hpp"
#include "fishloc/synthetic.hpp"

using namespace fishloc;

namespace {

SceneStyle small_style() {
  SceneStyle s = SceneStyle::noiseless();
  s.extent = 40.0;
  s.lidar_spacing = 0.2;
  s.camera_height = 8.0;
  return s;
}

struct Fixture {
  SyntheticScene scene = generate_scene(3, small_style());
  GrayImage image = render_fisheye(scene);
  GridSearchConfig config = [] {
    GridSearchConfig c;
    c.point_radius = 20.0;
    return c;
  }();
  std::vector<LidarPoint> points = select_points(scene.map.lidar, scene.gt_pose, config);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST(Sampling, AllPointsBehindCamera) {
  const auto& f = fixture();
  // Far below the map looking down: every point is almost straight behind it.
  const auto pose = CameraPose::from_center_rpy({0, 0, -1000}, 0, 0, 0);
  EXPECT_TRUE(sample_intensities(f.image, f.scene.intrinsics, pose, f.points).empty());
  const Vec3 rpy = pose.rpy();
  const auto e = evaluate_pose(Theta::from_pose(pose), rpy.x(), rpy.y(), f.image, f.scene.intrinsics, f.points);
  EXPECT_FALSE(e.valid);
  EXPECT_EQ(e.n_points, 0u);
  EXPECT_TRUE(std::isinf(e.mi) && e.mi < 0);
}

TEST(Sampling, ConstantImage) {
  const auto& f = fixture();
  const GrayImage flat(f.image.width(), f.image.height(), 128);
  const auto s = sample_intensities(flat, f.scene.intrinsics, f.scene.gt_pose, f.points);
  ASSERT_FALSE(s.empty());
  for (const auto& p : s) EXPECT_EQ(p.y, 128);
}

TEST(Sampling, SizeMismatchThrows) {
  const auto& f = fixture();
  EXPECT_THROW(sample_intensities(GrayImage(10, 10), f.scene.intrinsics, f.scene.gt_pose, f.points), InputError);
}

TEST(Sampling, RenderIdentityAtGroundTruth) {
  const auto& f = fixture();
  std::vector<LidarPoint> interior;
  for (const auto& p : f.points) {
    if (is_interior(f.scene, f.scene.gt_pose, p)) interior.push_back(p);
  }
  ASSERT_GT(interior.size(), 1000u);
  const auto s = sample_intensities(f.image, f.scene.intrinsics, f.scene.gt_pose, interior);
  ASSERT_EQ(s.size(), interior.size());
  for (const auto& p : s) ASSERT_EQ(p.x, p.y);
  const Vec3 rpy = f.scene.gt_pose.rpy();
  const auto e = evaluate_pose(Theta::from_pose(f.scene.gt_pose), rpy.x(), rpy.y(), f.image, f.scene.intrinsics, interior);
  ASSERT_TRUE(e.valid);
  EXPECT_NEAR(e.mi, e.h_x, 1e-9);
}

TEST(Evaluate, BitIdenticalRepeats) {
  const auto& f = fixture();
  const Vec3 rpy = f.scene.gt_pose.rpy();
  Theta t = Theta::from_pose(f.scene.gt_pose);
  t.x += 0.13;
  const auto a = evaluate_pose(t, rpy.x(), rpy.y(), f.image, f.scene.intrinsics, f.points);
  const auto b = evaluate_pose(t, rpy.x(), rpy.y(), f.image, f.scene.intrinsics, f.points);
  EXPECT_EQ(a.mi, b.mi);
  EXPECT_EQ(a.n_points, b.n_points);
  // A reused evaluator gives the same value as a fresh one.
  MIEvaluator ev(f.image, f.scene.intrinsics, f.points);
  ev.evaluate(Theta::from_pose(f.scene.gt_pose), rpy.x(), rpy.y());
  EXPECT_EQ(ev.evaluate(t, rpy.x(), rpy.y()).mi, a.mi);
}

TEST(Evaluate, MatchesHistogramPath) {
  const auto& f = fixture();
  const auto s = sample_intensities(f.image, f.scene.intrinsics, f.scene.gt_pose, f.points);
  const auto m = mutual_information(s);
  const Vec3 rpy = f.scene.gt_pose.rpy();
  const auto e = evaluate_pose(Theta::from_pose(f.scene.gt_pose), rpy.x(), rpy.y(), f.image, f.scene.intrinsics, f.points);
  EXPECT_EQ(e.n_points, s.size());
  EXPECT_EQ(e.mi, m.mi);
  EXPECT_EQ(e.h_xy, m.h_xy);
}

TEST(GridSearch, ZeroRangeReturnsInit) {
  const auto& f = fixture();
  GridSearchConfig c = f.config;
  c.half_range = {0, 0, 0, 0};
  const auto r = grid_search(f.scene.gt_pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));
  EXPECT_EQ(r.pose.rotation(), f.scene.gt_pose.rotation());
  EXPECT_EQ(r.pose.translation(), f.scene.gt_pose.translation());
  EXPECT_EQ(r.best.theta, Theta::from_pose(f.scene.gt_pose));
}

TEST(GridSearch, RecoversRenderPose) {
  const auto& f = fixture();
  const Vec3 rpy = f.scene.gt_pose.rpy();
  Theta init = Theta::from_pose(f.scene.gt_pose);
  init.x += 0.5;
  init.y -= 0.5;
  init.yaw += 2.0 * kDegree;
  GridSearchConfig c = f.config;
  c.half_range = {1.0, 1.0, 0.2, 5.0 * kDegree};
  const auto pose = pose_from_theta(init, rpy.x(), rpy.y());
  const auto points = select_points(f.scene.map.lidar, pose, c);
  const auto r = grid_search(pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(points));
  const Theta gt = Theta::from_pose(f.scene.gt_pose);
  const auto& fine = r.stages.back().step;
  for (int d = 0; d < 4; ++d) EXPECT_LE(std::abs(r.best.theta[d] - gt[d]), fine[d] + 1e-12) << "dimension " << d;
  EXPECT_GE(r.best.mi, r.initial.mi);
}

TEST(GridSearch, SingleStageEqualsBruteForce) {
  const auto& f = fixture();
  const Vec3 rpy = f.scene.gt_pose.rpy();
  GridSearchConfig c = f.config;
  c.stages = 1;
  c.half_range = {0.4, 0.4, 0.2, 1.0 * kDegree};
  c.step = {0.2, 0.2, 0.1, 0.5 * kDegree};
  Theta shifted = Theta::from_pose(f.scene.gt_pose);
  shifted.x += 0.1;
  const auto pose = pose_from_theta(shifted, rpy.x(), rpy.y());
  const Theta init = Theta::from_pose(pose);  // the grid is centred on the recovered parameters
  const auto r = grid_search(pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));

  MIEvaluation best;
  bool have = false;
  for (int ky = -2; ky <= 2; ++ky) {
    for (int kx = -2; kx <= 2; ++kx) {
      for (int kyy = -2; kyy <= 2; ++kyy) {
        for (int kz = -2; kz <= 2; ++kz) {
          Theta t = init;
          t.x = init.x + kx * c.step[0];
          t.y = init.y + kyy * c.step[1];
          t.z = init.z + kz * c.step[2];
          t.yaw = init.yaw + ky * c.step[3];
          const auto e = evaluate_pose(t, rpy.x(), rpy.y(), f.image, f.scene.intrinsics, f.points);
          if (!have || better_evaluation(e, best, init)) best = e;
          have = true;
        }
      }
    }
  }
  EXPECT_EQ(r.stages.front().cells.size(), 625u);
  EXPECT_EQ(r.best.theta, best.theta);
  EXPECT_EQ(r.best.mi, best.mi);
}

TEST(GridSearch, ParallelEqualsSerial) {
  const auto& f = fixture();
  const Vec3 rpy = f.scene.gt_pose.rpy();
  Theta init = Theta::from_pose(f.scene.gt_pose);
  init.y += 0.3;
  init.yaw -= 1.0 * kDegree;
  const auto pose = pose_from_theta(init, rpy.x(), rpy.y());
  GridSearchConfig c = f.config;
  c.half_range = {0.6, 0.6, 0.2, 2.0 * kDegree};
  c.threads = 1;
  const auto serial = grid_search(pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));
  for (int threads : {2, 3, 7}) {
    c.threads = threads;
    const auto parallel = grid_search(pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));
    EXPECT_EQ(parallel.best.theta, serial.best.theta);
    EXPECT_EQ(parallel.best.mi, serial.best.mi);
    for (std::size_t s = 0; s < serial.stages.size(); ++s) {
      for (std::size_t i = 0; i < serial.stages[s].cells.size(); ++i) {
        ASSERT_EQ(parallel.stages[s].cells[i].mi, serial.stages[s].cells[i].mi);
      }
    }
  }
}

TEST(GridSearch, AllInvalidThrows) {
  const auto& f = fixture();
  GridSearchConfig c = f.config;
  c.min_points = 10000000;
  c.half_range = {0.2, 0, 0, 0};
  EXPECT_THROW(grid_search(f.scene.gt_pose, c, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points)),
               MIFailure);
}

TEST(GridSearch, ConfigValidation) {
  GridSearchConfig c;
  c.step[2] = 0.0;
  EXPECT_THROW(c.validate(), InputError);
  c = GridSearchConfig{};
  c.shrink = 1.0;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(GridStage, CellOrderIsYawMajor) {
  GridStage s;
  s.counts = {1, 1, 1, 1};
  s.step = {1, 1, 1, 1};
  EXPECT_EQ(s.size(), 81u);
  const Theta first = s.theta_at(0), second = s.theta_at(1), last = s.theta_at(80);
  EXPECT_EQ(first, (Theta{-1, -1, -1, -1}));
  EXPECT_EQ(second, (Theta{-1, -1, 0, -1}));
  EXPECT_EQ(last, (Theta{1, 1, 1, 1}));
  EXPECT_EQ(s.theta_at(27), (Theta{-1, -1, -1, 0}));
}

TEST(Slices, CenterMatchesEvaluatePoseAndPeaksAtTruth) {
  const auto& f = fixture();
  const auto slices = mi_slices(f.scene.gt_pose, f.config, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));
  const Vec3 rpy = f.scene.gt_pose.rpy();
  const auto center = evaluate_pose(Theta::from_pose(f.scene.gt_pose), rpy.x(), rpy.y(), f.image, f.scene.intrinsics,
                                    f.points, f.config.min_points);
  const auto counts = detail::grid_counts(f.config.half_range, f.config.step);
  for (int d = 0; d < 4; ++d) {
    const auto& line = slices.line[d];
    ASSERT_EQ(line.size(), static_cast<std::size_t>(2 * counts[d] + 1));
    EXPECT_EQ(line[counts[d]].mi, center.mi);
    std::size_t arg = 0;
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i].mi > line[arg].mi) arg = i;
    }
    EXPECT_LE(std::abs(static_cast<int>(arg) - counts[d]), 1) << "dimension " << d;
  }
  EXPECT_EQ(slices.surfaces.size(), 6u);
  EXPECT_EQ(slices.surfaces[0].cells.size(), static_cast<std::size_t>((2 * counts[0] + 1) * (2 * counts[1] + 1)));
}

TEST(Slices, EquivariantUnderHalfTurn) {
  // Rotating map and pose by 180 degrees about the vertical through the
  // origin reverses the x and y slices.
  const auto& f = fixture();
  std::vector<LidarPoint> turned;
  for (auto p : f.points) {
    p.x = -p.x;
    p.y = -p.y;
    turned.push_back(p);
  }
  const Vec3 rpy = f.scene.gt_pose.rpy();
  const Vec3 c = f.scene.gt_pose.center();
  const auto pose = CameraPose::from_center_rpy(c, rpy.x(), rpy.y(), rpy.z());
  const auto pose_turned = CameraPose::from_center_rpy({-c.x(), -c.y(), c.z()}, rpy.x(), rpy.y(), rpy.z() + 3.14159265358979323846);
  GridSearchConfig cfg = f.config;
  cfg.half_range = {0.6, 0.6, 0.0, 0.0};
  const auto a = mi_slices(pose, cfg, f.image, f.scene.intrinsics, std::span<const LidarPoint>(f.points));
  const auto b = mi_slices(pose_turned, cfg, f.image, f.scene.intrinsics, std::span<const LidarPoint>(turned));
  for (int d = 0; d < 2; ++d) {
    const auto n = a.line[d].size();
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(a.line[d][i].mi, b.line[d][n - 1 - i].mi, 1e-3);
  }
}

TEST(Csv, Rows) {
  MIEvaluation valid;
  valid.theta = {1.5, -2.0, 10.0, 0.25};
  valid.n_points = 3;
  valid.h_x = valid.h_y = valid.h_xy = valid.mi = 0.5;
  valid.valid = true;
  MIEvaluation invalid;
  const std::vector<MIEvaluation> cells{valid, invalid};
  EXPECT_EQ(format_mi_csv(cells),
            "x,y,z,psi,n,H_X,H_Y,H_XY,MI\n1.5,-2,10,0.25,3,0.5,0.5,0.5,0.5\n0,0,0,0,0,0,0,0,-inf\n");
}
