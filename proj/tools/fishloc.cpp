// fishloc: localize a downward-looking fisheye camera in a satellite + LiDAR prior map.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fishloc/fishloc.hpp"

namespace fs = std::filesystem;
using namespace fishloc;

namespace {

constexpr const char* kToolVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitPnP = 3;
constexpr int kExitMI = 4;

/// Collects the canonical replay arguments and resolved configuration of a run.
class Recorder {
 public:
  explicit Recorder(std::string command) : command_(std::move(command)) {}

  void path(const std::string& flag, const std::string& p) {
    if (p.empty()) return;
    const std::string abs = fs::absolute(p).lexically_normal().string();
    argv_.push_back(flag);
    argv_.push_back(abs);
    config_[flag.substr(2)] = abs;
  }

  void value(const std::string& flag, double v) {
    argv_.push_back(flag);
    argv_.push_back(format_double(v));
    config_[flag.substr(2)] = v;
  }

  void integer(const std::string& flag, long long v) {
    argv_.push_back(flag);
    argv_.push_back(std::to_string(v));
    config_[flag.substr(2)] = v;
  }

  void text(const std::string& flag, const std::string& v) {
    argv_.push_back(flag);
    argv_.push_back(v);
    config_[flag.substr(2)] = v;
  }

  void flag(const std::string& flag, bool on) {
    if (on) argv_.push_back(flag);
    config_[flag.substr(2)] = on;
  }

  void stage(const std::string& name, double seconds) { timing_[name] = seconds; }

  /// manifest.json (reproducible) and timing.json (wall clock, not reproducible).
  void write(const fs::path& out_dir) const {
    Json manifest{{"tool", "fishloc"}, {"version", kToolVersion}, {"command", command_}, {"argv", argv_}, {"config", config_}};
    write_text_file((out_dir / "manifest.json").string(), dump_json(manifest));
    write_text_file((out_dir / "timing.json").string(), dump_json(Json{{"seconds", timing_}}));
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  Json config_ = Json::object();
  Json timing_ = Json::object();
};

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<double> parse_list(const std::string& text, std::size_t expected, const std::string& what) {
  std::vector<double> out;
  for (auto token : split(text, ',')) out.push_back(parse_double(token, what));
  if (out.size() != expected) {
    throw InputError(what + ": expected " + std::to_string(expected) + " comma-separated values, got '" + text + "'");
  }
  return out;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? "," : "") + format_double(values[i]);
  return out;
}

fs::path prepare_out_dir(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw InputError("cannot create output directory " + dir);
  return p;
}

// --- shared option groups -----------------------------------------------------

struct RectifyFlags {
  double focal = 0.0;  // 0: fx / 2
  int width = 0;       // 0: fisheye size
  int height = 0;
  std::string view_rpy = "0,0,0";  // degrees

  void add(CLI::App* app) {
    app->add_option("--focal", focal, "Virtual pinhole focal length in pixels (default fx/2)");
    app->add_option("--rect-width", width, "Virtual image width (default fisheye width)");
    app->add_option("--rect-height", height, "Virtual image height (default fisheye height)");
    app->add_option("--view-rpy", view_rpy, "Virtual axis roll,pitch,yaw in degrees relative to the fisheye axis");
  }

  RectificationSpec resolve(const CameraIntrinsics& k, Recorder& rec) const {
    RectificationSpec spec = RectificationSpec::default_for(k);
    if (focal != 0.0) spec.focal = focal;
    if (width != 0) spec.width = width;
    if (height != 0) spec.height = height;
    const auto rpy = parse_list(view_rpy, 3, "--view-rpy");
    spec.rotation = (Eigen::AngleAxisd(rpy[2] * kDegree, Vec3::UnitZ()) *
                     Eigen::AngleAxisd(rpy[1] * kDegree, Vec3::UnitY()) *
                     Eigen::AngleAxisd(rpy[0] * kDegree, Vec3::UnitX()))
                        .toRotationMatrix();
    spec.validate();
    rec.value("--focal", spec.focal);
    rec.integer("--rect-width", spec.width);
    rec.integer("--rect-height", spec.height);
    rec.text("--view-rpy", join(rpy));
    return spec;
  }
};

struct GridFlags {
  std::string grid = "2,2,0.5,5,0.2,0.2,0.1,0.5";
  int stages = 2;
  double shrink = 5.0;
  std::size_t min_points = kDefaultMinPoints;
  std::size_t max_points = GridSearchConfig{}.max_points;
  double point_radius = GridSearchConfig{}.point_radius;
  int threads = 0;

  void add(CLI::App* app) {
    app->add_option("--grid", grid, "Half-ranges and steps: hx,hy,hz,hpsi,sx,sy,sz,spsi (meters, psi in degrees)");
    app->add_option("--stages", stages, "Coarse-to-fine stages");
    app->add_option("--shrink", shrink, "Step shrink factor per stage");
    app->add_option("--min-points", min_points, "Minimum in-view points for a valid MI evaluation");
    app->add_option("--max-points", max_points, "LiDAR points used for MI (0 = all within the radius)");
    app->add_option("--point-radius", point_radius, "Radius in meters of the LiDAR points used around the camera");
    app->add_option("--threads", threads, "Worker threads (default: FISHLOC_THREADS or all cores)");
  }

  GridSearchConfig resolve(Recorder& rec) const {
    const auto g = parse_list(grid, 8, "--grid");
    GridSearchConfig c;
    for (int d = 0; d < 4; ++d) {
      c.half_range[d] = d == 3 ? g[d] * kDegree : g[d];
      c.step[d] = d == 3 ? g[4 + d] * kDegree : g[4 + d];
    }
    c.stages = stages;
    c.shrink = shrink;
    c.min_points = min_points;
    c.max_points = max_points;
    c.point_radius = point_radius;
    c.threads = threads;
    c.validate();
    rec.text("--grid", join(g));
    rec.integer("--stages", stages);
    rec.value("--shrink", shrink);
    rec.integer("--min-points", static_cast<long long>(min_points));
    rec.integer("--max-points", static_cast<long long>(max_points));
    rec.value("--point-radius", point_radius);
    return c;  // thread count does not affect results and is not recorded
  }
};

std::vector<Vec3> positions(const std::vector<LidarPoint>& points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.position());
  return out;
}

// --- commands -----------------------------------------------------------------

struct RectifyCmd {
  std::string intrinsics, image, out_dir;
  RectifyFlags rect;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("rectify", "Resample a fisheye image into a virtual perspective view");
    c->add_option("--intrinsics", intrinsics, "Intrinsics file")->required();
    c->add_option("--image", image, "Fisheye image (PNG/PGM)")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    rect.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("rectify");
    Stopwatch sw;
    rec.path("--intrinsics", intrinsics);
    rec.path("--image", image);
    const auto k = read_intrinsics(intrinsics);
    const auto spec = rect.resolve(k, rec);
    const auto fisheye = load_gray_image(image);
    rec.stage("load", sw.lap());
    const auto out = rectify_image(fisheye, build_rectification_map(k, spec));
    rec.stage("rectify", sw.lap());
    const auto dir = prepare_out_dir(out_dir);
    write_png(out, (dir / "rectified.png").string());
    rec.write(dir);
  }
};

struct InitPnPCmd {
  std::string intrinsics, image, sat, world_file, lidar, matches, gps_init, out_dir;
  RectifyFlags rect;
  double threshold = RansacOptions{}.threshold;
  double confidence = RansacOptions{}.confidence;
  int max_iterations = RansacOptions{}.max_iterations;
  std::uint64_t seed = 0;
  std::size_t max_points = GridSearchConfig{}.max_points;
  double point_radius = GridSearchConfig{}.point_radius;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("init-pnp", "Initial pose from rectified-image / satellite correspondences");
    c->add_option("--intrinsics", intrinsics, "Intrinsics file")->required();
    c->add_option("--image", image, "Fisheye image used for the overlay")->required();
    c->add_option("--sat", sat, "Satellite raster (PNG/PGM)")->required();
    c->add_option("--world-file", world_file, "Satellite world file")->required();
    c->add_option("--lidar", lidar, "LiDAR ground points CSV")->required();
    c->add_option("--matches", matches, "Correspondence CSV u_rect,v_rect,u_sat,v_sat")->required();
    c->add_option("--gps-init", gps_init, "x,y,r: satellite pixels are in the crop around (x, y) of half-size r");
    c->add_option("--threshold", threshold, "RANSAC inlier threshold in rectified pixels");
    c->add_option("--confidence", confidence, "RANSAC confidence");
    c->add_option("--max-iterations", max_iterations, "RANSAC iteration cap");
    c->add_option("--seed", seed, "RANSAC seed");
    c->add_option("--max-points", max_points, "LiDAR points drawn in the overlay (0 = all within the radius)");
    c->add_option("--point-radius", point_radius, "Overlay point radius in meters");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    rect.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("init-pnp");
    Stopwatch sw;
    for (const auto& [flag, p] : std::vector<std::pair<std::string, std::string>>{
             {"--intrinsics", intrinsics}, {"--image", image}, {"--sat", sat}, {"--world-file", world_file},
             {"--lidar", lidar}, {"--matches", matches}}) {
      rec.path(flag, p);
    }
    const auto k = read_intrinsics(intrinsics);
    const auto spec = rect.resolve(k, rec);
    const auto fisheye = load_gray_image(image);
    auto prior = load_prior_map(sat, world_file, lidar);
    SatelliteMap crop = prior.satellite;
    if (!gps_init.empty()) {
      const auto g = parse_list(gps_init, 3, "--gps-init");
      const GpsInit init{g[0], g[1], g[2]};
      init.validate();
      crop = crop_satellite(prior.satellite, init);
      rec.text("--gps-init", join(g));
    }
    const auto correspondences = read_correspondences(matches);
    rec.stage("load", sw.lap());

    RansacOptions opt;
    opt.threshold = threshold;
    opt.confidence = confidence;
    opt.max_iterations = max_iterations;
    opt.seed = seed;
    rec.value("--threshold", threshold);
    rec.value("--confidence", confidence);
    rec.integer("--max-iterations", max_iterations);
    rec.integer("--seed", static_cast<long long>(seed));
    rec.integer("--max-points", static_cast<long long>(max_points));
    rec.value("--point-radius", point_radius);

    const auto lifted = lift_correspondences(correspondences, crop, prior.lidar);
    const auto result = ransac_pnp(to_pnp_pairs(lifted), spec, opt);
    rec.stage("ransac", sw.lap());

    const Vec3 c = result.pose.center();
    const auto pts = query_ground_points(prior.lidar, {c.x(), c.y()}, point_radius, max_points);
    RgbImage overlay(fisheye);
    const std::size_t marked = draw_points(overlay, k, result.pose, positions(pts));

    Json j = pnp_result_to_json(result);
    j["n_correspondences"] = correspondences.size();
    std::size_t fallbacks = 0;
    for (const auto& l : lifted) fallbacks += l.height_fallback ? 1 : 0;
    j["height_fallbacks"] = fallbacks;
    j["overlay_n_points"] = marked;
    const auto dir = prepare_out_dir(out_dir);
    write_text_file((dir / "pnp_pose.json").string(), dump_json(j));
    write_png(overlay, (dir / "pnp_overlay.png").string());
    rec.stage("write", sw.lap());
    rec.write(dir);
    std::cout << "PnP: " << result.inliers.size() << "/" << correspondences.size() << " inliers, mean error "
              << result.mean_error << " px\n";
  }
};

struct RefineMICmd {
  std::string pose, intrinsics, image, lidar, out_dir;
  GridFlags grid;
  bool dump_grid = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("refine-mi", "Refine (x, y, z, yaw) by maximizing mutual information");
    c->add_option("--pose", pose, "Initial pose JSON (e.g. pnp_pose.json)")->required();
    c->add_option("--intrinsics", intrinsics, "Intrinsics file")->required();
    c->add_option("--image", image, "Fisheye image (PNG/PGM)")->required();
    c->add_option("--lidar", lidar, "LiDAR ground points CSV")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_flag("--dump-grid", dump_grid, "Also write every evaluated grid cell per stage");
    grid.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("refine-mi");
    Stopwatch sw;
    rec.path("--pose", pose);
    rec.path("--intrinsics", intrinsics);
    rec.path("--image", image);
    rec.path("--lidar", lidar);
    const auto config = grid.resolve(rec);
    rec.flag("--dump-grid", dump_grid);
    const auto init = read_pose_json(pose);
    const auto k = read_intrinsics(intrinsics);
    const auto fisheye = load_gray_image(image);
    const LidarGroundMap map(read_lidar_csv(lidar));
    rec.stage("load", sw.lap());

    const auto points = select_points(map, init, config);
    const auto result = grid_search(init, config, fisheye, k, std::span<const LidarPoint>(points));
    rec.stage("grid_search", sw.lap());
    const auto slices = mi_slices(init, config, fisheye, k, std::span<const LidarPoint>(points));
    rec.stage("slices", sw.lap());

    RgbImage overlay(fisheye);
    const std::size_t marked = draw_points(overlay, k, result.pose, positions(points));
    Json j = pose_to_json(result.pose);
    j["theta"] = theta_to_json(result.best.theta);
    j["mi"] = evaluation_to_json(result.best);
    j["initial_mi"] = evaluation_to_json(result.initial);
    j["n_map_points"] = points.size();
    Json cells = Json::array();
    for (const auto& s : result.stages) cells.push_back(s.cells.size());
    j["grid_cells"] = cells;
    j["overlay_n_points"] = marked;

    const auto dir = prepare_out_dir(out_dir);
    write_text_file((dir / "mi_pose.json").string(), dump_json(j));
    write_png(overlay, (dir / "mi_overlay.png").string());
    static const char* kNames[4] = {"x", "y", "z", "psi"};
    for (int d = 0; d < 4; ++d) {
      write_text_file((dir / (std::string("mi_slice_") + kNames[d] + ".csv")).string(),
                      format_mi_csv(slices.line[d]));
    }
    for (const auto& s : slices.surfaces) {
      write_text_file((dir / (std::string("mi_surface_") + kNames[s.dim_a] + "_" + kNames[s.dim_b] + ".csv")).string(),
                      format_mi_csv(s.cells));
    }
    if (dump_grid) {
      for (std::size_t s = 0; s < result.stages.size(); ++s) {
        write_text_file((dir / ("mi_grid_stage" + std::to_string(s + 1) + ".csv")).string(),
                        format_mi_csv(result.stages[s].cells));
      }
    }
    rec.stage("write", sw.lap());
    rec.write(dir);
    std::cout << "MI: " << result.initial.mi << " -> " << result.best.mi << " nats over " << result.best.n_points
              << " points\n";
  }
};

struct EvaluateCmd {
  std::string intrinsics, checkpoints, out_dir;
  std::vector<std::string> poses;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("evaluate", "Reprojection error of check points under one or more poses");
    c->add_option("--intrinsics", intrinsics, "Intrinsics file")->required();
    c->add_option("--checkpoints", checkpoints, "Check-point CSV x,y,z,u,v")->required();
    c->add_option("--pose", poses, "NAME=pose.json (repeatable)")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("evaluate");
    rec.path("--intrinsics", intrinsics);
    rec.path("--checkpoints", checkpoints);
    std::vector<NamedPose> named;
    Json pose_cfg = Json::array();
    for (const auto& spec : poses) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos || eq == 0) throw InputError("--pose expects NAME=path, got '" + spec + "'");
      const std::string name = spec.substr(0, eq);
      const std::string abs = fs::absolute(spec.substr(eq + 1)).lexically_normal().string();
      named.push_back({name, read_pose_json(abs)});
      rec.text("--pose", name + "=" + abs);
    }
    const auto k = read_intrinsics(intrinsics);
    const auto report = reprojection_report(k, named, read_check_points(checkpoints));
    Json j = Json::object();
    Json means = Json::object();
    for (std::size_t i = 0; i < report.names.size(); ++i) means[report.names[i]] = report.means[i];
    j["mean_error"] = means;
    j["n_points"] = report.points.size();
    const auto dir = prepare_out_dir(out_dir);
    write_text_file((dir / "report.csv").string(), format_report_csv(report));
    write_text_file((dir / "report.json").string(), dump_json(j));
    write_text_file((dir / "report.txt").string(), format_report_summary(report));
    rec.write(dir);
    std::cout << format_report_summary(report);
  }
};

struct SynthCmd {
  std::uint64_t seed = 0;
  bool noiseless = false;
  SceneStyle style;
  FabricationOptions fab;
  std::size_t n_checkpoints = 30;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Write a synthetic scene bundle with ground truth");
    c->add_option("--seed", seed, "Scene seed");
    c->add_flag("--noiseless", noiseless, "Render without noise, gain 1 and bias 0");
    c->add_option("--extent", style.extent, "Map side in meters");
    c->add_option("--lidar-spacing", style.lidar_spacing, "LiDAR grid spacing in meters");
    c->add_option("--camera-height", style.camera_height, "Camera height above ground in meters");
    c->add_option("--noise-sigma", style.noise_sigma, "Render noise standard deviation in gray levels");
    c->add_option("--satellite-shift", style.satellite_shift, "Satellite georeferencing error in meters");
    c->add_option("--matches", fab.count, "Number of fabricated correspondences");
    c->add_option("--outliers", fab.outlier_fraction, "Fraction of correspondences made outliers");
    c->add_option("--match-noise", fab.noise_sigma, "Rectified-pixel noise of the correspondences");
    c->add_option("--gps-noise", fab.gps_noise, "GPS position noise in meters");
    c->add_option("--search-radius", fab.search_radius, "Satellite crop half-size in meters");
    c->add_option("--match-seed", fab.seed, "Correspondence seed");
    c->add_option("--checkpoints", n_checkpoints, "Number of check points");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("synth");
    Stopwatch sw;
    SceneStyle st = style;
    if (noiseless) {
      const SceneStyle n = SceneStyle::noiseless();
      st.noise_sigma = n.noise_sigma;
      st.gain = n.gain;
      st.bias = n.bias;
      st.satellite_shift = n.satellite_shift;
    }
    rec.integer("--seed", static_cast<long long>(seed));
    rec.flag("--noiseless", noiseless);
    rec.value("--extent", st.extent);
    rec.value("--lidar-spacing", st.lidar_spacing);
    rec.value("--camera-height", st.camera_height);
    rec.value("--noise-sigma", style.noise_sigma);
    rec.value("--satellite-shift", style.satellite_shift);
    rec.integer("--matches", static_cast<long long>(fab.count));
    rec.value("--outliers", fab.outlier_fraction);
    rec.value("--match-noise", fab.noise_sigma);
    rec.value("--gps-noise", fab.gps_noise);
    rec.value("--search-radius", fab.search_radius);
    rec.integer("--match-seed", static_cast<long long>(fab.seed));
    rec.integer("--checkpoints", static_cast<long long>(n_checkpoints));

    const auto scene = generate_scene(seed, st);
    const auto image = render_fisheye(scene);
    rec.stage("render", sw.lap());
    const auto m = fabricate_correspondences(scene, fab);
    const auto dir = prepare_out_dir(out_dir);
    write_png(image, (dir / "fisheye.png").string());
    write_png(scene.map.satellite.raster, (dir / "satellite.png").string());
    write_png(scene.reflectivity.raster, (dir / "reflectivity.png").string());
    write_text_file((dir / "satellite.world").string(), format_world_file(scene.map.satellite));
    write_text_file((dir / "lidar.csv").string(), format_lidar_csv(scene.map.lidar.points()));
    write_intrinsics(scene.intrinsics, (dir / "intrinsics.txt").string());
    write_text_file((dir / "gt_pose.json").string(), dump_json(pose_to_json(scene.gt_pose)));
    write_text_file((dir / "matches.csv").string(), format_correspondences(m.matches));
    write_text_file((dir / "gps_init.txt").string(), join({m.gps.x, m.gps.y, m.gps.search_radius}) + "\n");
    write_text_file((dir / "checkpoints.csv").string(), format_check_points(synthetic_check_points(scene, n_checkpoints)));
    rec.stage("write", sw.lap());
    rec.write(dir);
  }
};

struct TrialsCmd {
  std::uint64_t scene_seed = 0;
  std::uint64_t seed = 0;
  int n_trials = 100;
  std::string bounds = "1,1,0.3,5";
  GridFlags grid;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("trials", "Robustness of MI refinement to the initialization on a synthetic scene");
    c->add_option("--scene-seed", scene_seed, "Scene seed");
    c->add_option("--seed", seed, "Suite seed for the initial perturbations");
    c->add_option("--n-trials", n_trials, "Number of trials");
    c->add_option("--bounds", bounds, "Perturbation bounds bx,by,bz,bpsi (meters, psi in degrees)");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    grid.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    Recorder rec("trials");
    Stopwatch sw;
    rec.integer("--scene-seed", static_cast<long long>(scene_seed));
    rec.integer("--seed", static_cast<long long>(seed));
    rec.integer("--n-trials", n_trials);
    const auto b = parse_list(bounds, 4, "--bounds");
    rec.text("--bounds", join(b));
    TrialSuiteConfig cfg;
    cfg.n_trials = n_trials;
    cfg.seed = seed;
    cfg.bounds = {b[0], b[1], b[2], b[3] * kDegree};
    cfg.grid = grid.resolve(rec);
    const auto scene = generate_scene(scene_seed);
    const auto summary = robustness_trial_suite(scene, cfg);
    rec.stage("trials", sw.lap());
    const auto dir = prepare_out_dir(out_dir);
    write_text_file((dir / "trials.csv").string(), format_trials_csv(summary.trials));
    Json j{{"n_trials", summary.trials.size()},
           {"converged", summary.converged},
           {"translation_dispersion", summary.translation_dispersion},
           {"yaw_dispersion", summary.yaw_dispersion},
           {"ground_truth", theta_to_json(Theta::from_pose(scene.gt_pose))}};
    write_text_file((dir / "trials_summary.json").string(), dump_json(j));
    rec.write(dir);
    std::cout << summary.converged << "/" << summary.trials.size() << " trials converged\n";
  }
};

int run_cli(std::vector<std::string> args);

struct RerunCmd {
  std::string manifest, out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("rerun", "Repeat a run from its manifest.json");
    c->add_option("--manifest", manifest, "manifest.json of a previous run")->required();
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->callback([this] { run(); });
  }

  void run() const {
    const Json m = read_json_file(manifest);
    std::vector<std::string> args{"fishloc"};
    try {
      if (m.at("tool").get<std::string>() != "fishloc") throw InputError(manifest + ": not a fishloc manifest");
      args.push_back(m.at("command").get<std::string>());
      for (const auto& a : m.at("argv")) args.push_back(a.get<std::string>());
    } catch (const Json::exception& e) {
      throw InputError(manifest + ": " + e.what());
    }
    if (args[1] == "rerun") throw InputError(manifest + ": refusing to rerun a rerun");
    args.push_back("--out-dir");
    args.push_back(out_dir);
    const int code = run_cli(args);
    if (code != kExitOk) throw std::runtime_error("rerun exited with code " + std::to_string(code));
  }
};

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Localize a downward-looking fisheye camera in a satellite + LiDAR prior map"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  RectifyCmd rectify;
  InitPnPCmd init_pnp;
  RefineMICmd refine;
  EvaluateCmd evaluate;
  SynthCmd synth;
  TrialsCmd trials;
  RerunCmd rerun;
  rectify.add(app);
  init_pnp.add(app);
  refine.add(app);
  evaluate.add(app);
  synth.add(app);
  trials.add(app);
  rerun.add(app);

  args.erase(args.begin());
  std::reverse(args.begin(), args.end());  // CLI11 consumes the argument vector from the back
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  } catch (const PnPFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPnP;
  } catch (const MIFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMI;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) { return run_cli(std::vector<std::string>(argv, argv + argc)); }
