// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/pnp_scenario.hpp"
#include "fishloc/fishloc.hpp"

namespace fs = std::filesystem;
using namespace fishloc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << "Criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!pass) ++failures;
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// Independent entropies: joint table by a loop over samples, then a double
// loop over all 256 x 256 bins in long double.
Entropies brute_force_entropies(const std::vector<IntensitySample>& s) {
  static std::vector<long> joint(256 * 256);
  std::fill(joint.begin(), joint.end(), 0);
  for (const auto& p : s) ++joint[p.x * 256 + p.y];
  const long double n = static_cast<long double>(s.size());
  long double hx = 0, hy = 0, hxy = 0;
  for (int a = 0; a < 256; ++a) {
    long row = 0, col = 0;
    for (int b = 0; b < 256; ++b) {
      row += joint[a * 256 + b];
      col += joint[b * 256 + a];
      if (const long c = joint[a * 256 + b]) hxy -= (c / n) * std::log(c / n);
    }
    if (row) hx -= (row / n) * std::log(row / n);
    if (col) hy -= (col / n) * std::log(col / n);
  }
  Entropies e;
  e.h_x = static_cast<double>(hx);
  e.h_y = static_cast<double>(hy);
  e.h_xy = static_cast<double>(hxy);
  e.mi = static_cast<double>(hx + hy - hxy);
  return e;
}

void mi_oracle_and_bounds() {
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(10, 100000);
  std::uniform_int_distribution<int> value(0, 255);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_oracle = 0.0, worst_lower = 0.0, worst_upper = 0.0;
  bool symmetric = true;
  double mi_seconds = 0.0;
  const auto t0 = Clock::now();
  for (int set = 0; set < 1000; ++set) {
    const int n = size(rng);
    const double copy = unit(rng);  // dependence strength, marginals stay uniform
    std::vector<IntensitySample> s(n), swapped(n);
    for (int i = 0; i < n; ++i) {
      const auto x = static_cast<std::uint8_t>(value(rng));
      const auto y = unit(rng) < copy ? x : static_cast<std::uint8_t>(value(rng));
      s[i] = {x, y};
      swapped[i] = {y, x};
    }
    const auto t1 = Clock::now();
    const auto e = mutual_information(s);
    const auto r = mutual_information(swapped);
    mi_seconds += seconds_since(t1);
    const auto o = brute_force_entropies(s);
    worst_oracle = std::max({worst_oracle, std::abs(e.mi - o.mi), std::abs(e.h_x - o.h_x), std::abs(e.h_y - o.h_y),
                             std::abs(e.h_xy - o.h_xy)});
    worst_lower = std::min(worst_lower, e.mi);
    worst_upper = std::max(worst_upper, e.mi - std::min(e.h_x, e.h_y));
    symmetric = symmetric && r.mi == e.mi;
  }
  const double total = seconds_since(t0);
  report(1, worst_oracle < 1e-12 && total < 60.0,
         "max |MI - oracle| = " + fmt(worst_oracle) + " nats over 1000 sets, " + fmt(total) + " s (MI itself " +
             fmt(mi_seconds) + " s)");
  report(2, worst_lower >= -1e-12 && worst_upper <= 1e-12 && symmetric,
         "min MI = " + fmt(worst_lower) + ", max MI - min(H_X,H_Y) = " + fmt(worst_upper) +
             (symmetric ? ", MI(X,Y) == MI(Y,X) on every set" : ", asymmetric set found"));
}

void projection_round_trip() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  long checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    CameraIntrinsics k;
    k.width = 800;
    k.height = 600;
    k.fx = 250.0 + 50.0 * u(rng);
    k.fy = k.fx * (1.0 + 0.02 * u(rng));
    k.s = 0.5 * u(rng);
    k.cx = 399.5 + 10.0 * u(rng);
    k.cy = 299.5 + 10.0 * u(rng);
    k.k1 = 0.1 * u(rng);
    k.k2 = 0.1 * u(rng);
    k.p1 = 0.01 * u(rng);
    k.p2 = 0.01 * u(rng);
    k.xi = 0.6 + 0.6 * u(rng);
    const FisheyeProjector p(k);
    int in_view = 0;
    while (in_view < 1000) {
      const Vec3 dir = Vec3(u(rng), u(rng), u(rng) + 0.2).normalized();
      Vec2 px;
      if (!p.project(dir * (0.5 + 20.0 * std::abs(u(rng))), px)) continue;
      const Vec3 ray = p.unproject(px);
      worst = std::max(worst, ray.dot(dir) > 0.0 ? ray.cross(dir).norm() : 2.0);
      ++in_view;
    }
    checked += in_view;
  }
  CameraIntrinsics pin;
  pin.width = 800;
  pin.height = 600;
  pin.fx = 310.0;
  pin.fy = 305.0;
  pin.cx = 401.0;
  pin.cy = 297.0;
  const FisheyeProjector pp(pin);
  double pin_worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 q(u(rng), u(rng), 1.0 + std::abs(u(rng)));
    Vec2 px;
    if (!pp.project(q, px)) continue;
    pin_worst = std::max(pin_worst, (px - Vec2(pin.fx * q.x() / q.z() + pin.cx, pin.fy * q.y() / q.z() + pin.cy)).norm());
  }
  report(3, worst < 1e-6 && pin_worst < 1e-12,
         std::to_string(checked) + " points, max ray misalignment " + fmt(worst) + ", pinhole deviation " +
             fmt(pin_worst) + " px");
}

void pnp_recovery() {
  const auto t0 = Clock::now();
  double worst_t = 0.0, worst_r = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = fishloc::testing::make_pnp_scenario(seed, 50, 0.0, 0.0);
    const auto r = ransac_pnp(s.pairs, s.spec);
    worst_t = std::max(worst_t, (r.virtual_pose.center() - s.truth.center()).norm());
    worst_r = std::max(worst_r, fishloc::testing::rotation_error(r.virtual_pose, s.truth));
  }
  int good = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto s = fishloc::testing::make_pnp_scenario(5000 + seed, 50, 0.3, 0.5);
    RansacOptions opt;
    opt.threshold = 2.0;
    opt.seed = seed;
    try {
      const auto r = ransac_pnp(s.pairs, s.spec, opt);
      good += (r.virtual_pose.center() - s.truth.center()).norm() < 0.05 ? 1 : 0;
    } catch (const PnPFailure&) {
    }
  }
  const double total = seconds_since(t0);
  report(4, worst_t < 1e-4 && worst_r < 1e-5 && good >= 95 && total < 30.0,
         "noise-free max error " + fmt(worst_t) + " m / " + fmt(worst_r) + " rad; " + std::to_string(good) +
             "/100 under 0.05 m with 30% outliers; " + fmt(total) + " s");
}

void render_identity() {
  const auto scene = generate_scene(0, SceneStyle::noiseless());
  const auto image = render_fisheye(scene);
  const GridSearchConfig config;
  const auto points = select_points(scene.map.lidar, scene.gt_pose, config);
  std::vector<LidarPoint> interior;
  for (const auto& p : points) {
    if (is_interior(scene, scene.gt_pose, p)) interior.push_back(p);
  }
  const auto samples = sample_intensities(image, scene.intrinsics, scene.gt_pose, interior);
  std::size_t equal = 0;
  for (const auto& s : samples) equal += s.x == s.y ? 1 : 0;
  const Vec3 rpy = scene.gt_pose.rpy();
  const auto e = evaluate_pose(Theta::from_pose(scene.gt_pose), rpy.x(), rpy.y(), image, scene.intrinsics, interior);
  const auto slices = mi_slices(scene.gt_pose, config, image, scene.intrinsics, std::span<const LidarPoint>(points));
  const auto counts = detail::grid_counts(config.half_range, config.step);
  bool peaks = true;
  std::string offsets;
  for (int d = 0; d < 4; ++d) {
    const auto& line = slices.line[d];
    std::size_t arg = 0;
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i].mi > line[arg].mi) arg = i;
    }
    const int off = static_cast<int>(arg) - counts[d];
    peaks = peaks && std::abs(off) <= 1;
    offsets += (d ? "," : "") + std::to_string(off);
  }
  const bool identity = !samples.empty() && samples.size() == interior.size() && equal == samples.size();
  report(5, identity && e.valid && std::abs(e.mi - e.h_x) < 1e-9 && peaks,
         std::to_string(equal) + "/" + std::to_string(samples.size()) + " interior samples X = Y, |MI - H_X| = " +
             fmt(std::abs(e.mi - e.h_x)) + ", slice peak offsets (steps) x,y,z,psi = " + offsets);
}

void robustness_suite() {
  const auto scene = generate_scene(0);
  const auto image = render_fisheye(scene);
  TrialSuiteConfig cfg;
  const auto t0 = Clock::now();
  const auto s = robustness_trial_suite(scene, image, cfg);
  const double total = seconds_since(t0);
  report(6, s.converged >= 90 && s.yaw_dispersion < s.translation_dispersion && total < 15 * 60.0,
         std::to_string(s.converged) + "/100 converged, dispersion yaw " + fmt(s.yaw_dispersion) + " < translation " +
             fmt(s.translation_dispersion) + ", " + fmt(total) + " s on " + std::to_string(resolve_threads(0)) +
             " thread(s), " + std::to_string(scene.map.lidar.size()) + " map points");
}

void two_step_improvement() {
  int not_worse = 0;
  std::vector<double> improvement;
  std::string table;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto scene = generate_scene(seed);
    const auto image = render_fisheye(scene);
    FabricationOptions fab;
    fab.seed = seed;
    const auto m = fabricate_correspondences(scene, fab);
    RansacOptions ro;
    ro.seed = seed;
    const auto pnp = ransac_pnp(to_pnp_pairs(lift_correspondences(m.matches, m.crop, scene.map.lidar)), m.spec, ro);
    const auto mi = grid_search(pnp.pose, GridSearchConfig{}, image, scene.intrinsics, scene.map.lidar);
    const auto rep = reprojection_report(scene.intrinsics, {{"PnP", pnp.pose}, {"MI", mi.pose}},
                                         synthetic_check_points(scene, 30));
    not_worse += rep.means[1] <= rep.means[0] ? 1 : 0;
    improvement.push_back(1.0 - rep.means[1] / rep.means[0]);
    table += (seed > 1 ? " " : "") + fmt(rep.means[0], 3) + "->" + fmt(rep.means[1], 3);
  }
  std::sort(improvement.begin(), improvement.end());
  const double median = 0.5 * (improvement[9] + improvement[10]);
  report(7, not_worse >= 19 && median >= 0.25,
         std::to_string(not_worse) + "/20 runs MI <= PnP, median improvement " + fmt(100.0 * median) + "% [px: " +
             table + "]");
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FISHLOC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every JSON/CSV output except the wall-clock timing file.
bool same_outputs(const fs::path& a, const fs::path& b, std::string& diff) {
  bool same = true;
  int files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename().string();
    const auto ext = entry.path().extension().string();
    if (name == "timing.json" || (ext != ".json" && ext != ".csv")) continue;
    ++files;
    if (!fs::exists(b / name) || read_text_file(entry.path().string()) != read_text_file((b / name).string())) {
      same = false;
      diff += " " + name;
    }
  }
  return same && files > 0;
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "fishloc_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto d = [&](const std::string& s) { return (dir / s).string(); };
  const std::string grid = " --grid 0.4,0.4,0.2,2,0.2,0.2,0.1,1";
  const std::vector<std::pair<std::string, std::string>> runs{
      {"synth", "synth --seed 3 --out-dir " + d("synth")},
      {"rectify", "rectify --intrinsics " + d("synth/intrinsics.txt") + " --image " + d("synth/fisheye.png") +
                      " --out-dir " + d("rectify")},
      {"init-pnp", "init-pnp --intrinsics " + d("synth/intrinsics.txt") + " --image " + d("synth/fisheye.png") +
                       " --sat " + d("synth/satellite.png") + " --world-file " + d("synth/satellite.world") +
                       " --lidar " + d("synth/lidar.csv") + " --matches " + d("synth/matches.csv") + " --out-dir " +
                       d("init-pnp")},
      {"refine-mi", "refine-mi --pose " + d("init-pnp/pnp_pose.json") + " --intrinsics " + d("synth/intrinsics.txt") +
                        " --image " + d("synth/fisheye.png") + " --lidar " + d("synth/lidar.csv") + grid +
                        " --dump-grid --out-dir " + d("refine-mi")},
      {"evaluate", "evaluate --intrinsics " + d("synth/intrinsics.txt") + " --checkpoints " +
                       d("synth/checkpoints.csv") + " --pose PnP=" + d("init-pnp/pnp_pose.json") +
                       " --pose MI=" + d("refine-mi/mi_pose.json") + " --out-dir " + d("evaluate")},
      {"trials", "trials --n-trials 2 --stages 1" + grid + " --out-dir " + d("trials")},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, args] : runs) {
    if (run_cli(args, dir / (name + ".log")) != 0) {
      ok = false;
      detail += " " + name + ":failed";
      continue;
    }
    if (run_cli("rerun --manifest " + d(name + "/manifest.json") + " --out-dir " + d(name + "_rerun"),
                dir / (name + "_rerun.log")) != 0) {
      ok = false;
      detail += " " + name + ":rerun-failed";
      continue;
    }
    std::string diff;
    const bool same = same_outputs(dir / name, dir / (name + "_rerun"), diff);
    ok = ok && same;
    detail += " " + name + (same ? ":identical" : ":differs(" + diff + ")");
  }

  const auto scene = generate_scene(0);
  const auto image = render_fisheye(scene);
  const auto init = perturbed_init(scene.gt_pose, {1.0, 1.0, 0.3, 5.0 * kDegree}, 99);
  GridSearchConfig serial, parallel;
  serial.threads = 1;
  parallel.threads = 4;
  const auto a = grid_search(init, serial, image, scene.intrinsics, scene.map.lidar);
  const auto b = grid_search(init, parallel, image, scene.intrinsics, scene.map.lidar);
  bool same_grid = a.best.theta == b.best.theta && a.best.mi == b.best.mi && a.stages.size() == b.stages.size();
  for (std::size_t s = 0; same_grid && s < a.stages.size(); ++s) {
    same_grid = format_mi_csv(a.stages[s].cells) == format_mi_csv(b.stages[s].cells);
  }
  report(8, ok && same_grid,
         "CLI reruns:" + detail + "; serial vs 4-thread grid search " + (same_grid ? "identical" : "differ"));
}

void histogram_exactness() {
  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> size(1, 2000);
  bool marginals = true;
  double worst_ratio = 0.0;
  for (int set = 0; set < 10000; ++set) {
    const int n = size(rng);
    const int span_x = 1 + static_cast<int>(rng() % 256), span_y = 1 + static_cast<int>(rng() % 256);
    std::vector<IntensitySample> s(n);
    for (auto& p : s) p = {static_cast<std::uint8_t>(rng() % span_x), static_cast<std::uint8_t>(rng() % span_y)};
    const auto h = build_histogram(s);
    double total = 0.0;
    for (int a = 0; a < 256 && marginals; ++a) {
      std::uint64_t row = 0, col = 0;
      for (int b = 0; b < 256; ++b) {
        row += h.joint_count(a, b);
        col += h.joint_count(b, a);
        total += h.p_xy(a, b);
      }
      marginals = row == h.x[a] && col == h.y[a];
    }
    worst_ratio = std::max(worst_ratio, std::abs(total - 1.0) / (1e-15 * n));
  }
  report(9, marginals && worst_ratio <= 1.0,
         std::string(marginals ? "joint marginals exact" : "marginal mismatch") +
             " on 10000 sets, max |sum p - 1| / (1e-15 n) = " + fmt(worst_ratio));
}

}  // namespace

int main() {
  std::cout.setf(std::ios::unitbuf);
  const std::vector<void (*)()> steps{mi_oracle_and_bounds, projection_round_trip, pnp_recovery, render_identity,
                                      robustness_suite,     two_step_improvement,  determinism,  histogram_exactness};
  int id_for_error = 1;
  for (auto step : steps) {
    try {
      step();
    } catch (const std::exception& e) {
      std::cout << "step " << id_for_error << " aborted: " << e.what() << std::endl;
      ++failures;
    }
    ++id_for_error;
  }
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
