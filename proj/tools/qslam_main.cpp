#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "qslam/backend.hpp"
#include "qslam/fitting.hpp"
#include "qslam/io.hpp"
#include "qslam/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qslam;

namespace {

Config load_config(const std::string& path) {
  Config cfg;
  if (!path.empty()) cfg.load_file(path);
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string csv_num(double x) {
  if (std::isnan(x)) return "nan";
  return format_fixed(x);
}

int cmd_simulate(const std::string& config_path, uint64_t seed,
                 const std::string& out_dir) {
  Config cfg = load_config(config_path);
  fs::create_directories(out_dir);

  const Scene scene = generate_default_scene(seed);
  Rng master(seed);
  Rng traj_rng = master.fork(1);
  Rng obs_rng = master.fork(2);
  Rng depth_rng = master.fork(3);

  const Trajectory traj = generate_trajectory(cfg.traj, traj_rng);
  const auto frames =
      synthesize_observations(scene, traj.gt, cfg.camera, cfg.noise, obs_rng);

  std::vector<std::pair<double, Pose>> gt_stamped, odom_stamped;
  for (size_t i = 0; i < traj.gt.size(); ++i) {
    gt_stamped.emplace_back(double(i), traj.gt[i]);
    odom_stamped.emplace_back(double(i), traj.odom_integrated[i]);
  }
  save_camera(fs::path(out_dir) / "camera.txt", cfg.camera);
  save_trajectory(fs::path(out_dir) / "groundtruth.txt", gt_stamped);
  save_trajectory(fs::path(out_dir) / "odometry.txt", odom_stamped);

  std::vector<SceneObject> gt_objects = scene.objects;
  save_objects(fs::path(out_dir) / "objects_gt.txt", gt_objects);

  std::vector<Detection> detections;
  for (const auto& f : frames) {
    detections.insert(detections.end(), f.detections.begin(),
                      f.detections.end());
  }
  save_detections(fs::path(out_dir) / "detections.txt", detections);

  Dataset paths;
  paths.root = out_dir;
  if (cfg.sim_emit == "depth") {
    fs::create_directories(fs::path(out_dir) / "depth");
    for (size_t i = 0; i < traj.gt.size(); ++i) {
      Rng frame_rng = depth_rng.fork(i);
      const DepthImage depth =
          render_depth(scene, traj.gt[i], cfg.camera, cfg.noise, frame_rng);
      save_depth(paths.depth_path(int(i)), depth);
    }
  } else {
    fs::create_directories(fs::path(out_dir) / "clouds");
    for (const auto& f : frames) {
      for (const auto& [oid, cloud] : f.clouds) {
        save_cloud(paths.cloud_path(f.frame_id, oid), f.support_cam, cloud);
      }
    }
  }

  auto cfg_out = open_out(fs::path(out_dir) / "config.cfg");
  cfg.echo(cfg_out);
  std::cout << "simulated " << frames.size() << " frames, "
            << detections.size() << " detections -> " << out_dir << "\n";
  return 0;
}

int cmd_estimate(const std::string& config_path, uint64_t seed,
                 const std::string& data_dir, std::string out_dir) {
  Config cfg = load_config(config_path);
  if (out_dir.empty()) out_dir = data_dir;
  fs::create_directories(out_dir);

  const Dataset data = load_dataset(data_dir);
  if (!data.has_clouds && !data.has_depth) {
    throw std::runtime_error("dataset has neither clouds/ nor depth/");
  }

  std::map<int, std::vector<Detection>> per_frame;
  for (const auto& d : data.detections) per_frame[d.frame_id].push_back(d);

  Rng master(seed);
  std::vector<Observation> observations;
  std::vector<std::string> diagnostics;

  for (const auto& [frame_id, dets] : per_frame) {
    if (data.has_depth) {
      const DepthImage depth = load_depth(data.depth_path(frame_id));
      Rng frame_rng = master.fork(uint64_t(frame_id));
      auto obs = estimate_single_frame(depth, data.camera, dets, cfg.seg,
                                       cfg.sym, cfg.fit, cfg.symmetry_table,
                                       frame_rng, &diagnostics);
      observations.insert(observations.end(), obs.begin(), obs.end());
      continue;
    }
    for (const auto& det : dets) {
      const fs::path path = data.cloud_path(frame_id, det.object_id);
      if (!fs::exists(path)) continue;
      const CloudFile file = load_cloud(path);
      SegmentedObject seg;
      seg.bbox = det.bbox;
      seg.label = det.label;
      seg.p_det = det.p_det;
      seg.support_plane = file.support;
      seg.cloud = filter_above_plane(file.cloud, file.support, cfg.seg.eps2);
      if (int(seg.cloud.size()) <= cfg.seg.eps3) {
        diagnostics.push_back("frame " + std::to_string(frame_id) + " object " +
                              std::to_string(det.object_id) +
                              ": envelope below eps3");
        continue;
      }
      auto obs = estimate_object(seg, frame_id, det.object_id, cfg.sym, cfg.fit,
                                 cfg.symmetry_table, &diagnostics);
      if (obs) observations.push_back(*obs);
    }
  }

  save_observations(fs::path(out_dir) / "observations.txt", observations);
  auto log = open_out(fs::path(out_dir) / "estimate_log.txt");
  for (const auto& line : diagnostics) log << line << '\n';
  std::cout << "estimated " << observations.size() << " observations ("
            << diagnostics.size() << " skips logged)\n";
  return 0;
}

int cmd_slam(const std::string& config_path, const std::string& data_dir,
             const std::string& mode_str, double epsilon_z,
             std::string out_dir) {
  Config cfg = load_config(config_path);
  if (!mode_str.empty()) cfg.graph.mode = mode_from_string(mode_str);
  if (epsilon_z >= 0) cfg.graph.epsilon_z = epsilon_z;
  if (out_dir.empty()) out_dir = data_dir;
  fs::create_directories(out_dir);

  const Dataset data = load_dataset(data_dir);
  std::vector<Observation> observations;
  const fs::path obs_path = fs::path(data_dir) / "observations.txt";
  if (fs::exists(obs_path)) observations = load_observations(obs_path);
  if (cfg.graph.mode != Mode::TwoDOnly && observations.empty()) {
    throw std::runtime_error(
        "mode needs 3D observations; run `estimate` first");
  }

  BuildInfo info;
  FactorGraph graph = build_graph(data.odometry_poses(), data.detections,
                                  observations, data.camera, cfg.graph, &info);
  const OptimizeReport report = optimize(graph, cfg.graph);

  std::map<int, std::string> labels;
  for (const auto& d : data.detections) labels.emplace(d.object_id, d.label);

  std::vector<SceneObject> map_objects;
  for (size_t i = 0; i < graph.landmarks.size(); ++i) {
    SceneObject o;
    o.object_id = graph.landmark_object_ids[i];
    const auto it = labels.find(o.object_id);
    o.label = it == labels.end() ? "unknown" : it->second;
    o.state = graph.landmarks[i];
    map_objects.push_back(o);
  }
  const std::string mode_name = mode_to_string(cfg.graph.mode);
  save_objects(fs::path(out_dir) / ("map_" + mode_name + ".txt"), map_objects);

  std::vector<std::pair<double, Pose>> opt_traj;
  for (size_t i = 0; i < graph.poses.size(); ++i) {
    opt_traj.emplace_back(double(i), graph.poses[i]);
  }
  save_trajectory(fs::path(out_dir) / ("trajectory_" + mode_name + ".txt"),
                  opt_traj);

  json j;
  j["mode"] = mode_name;
  j["epsilon_z"] = cfg.graph.epsilon_z;
  j["initial_cost"] = report.initial_cost;
  j["final_cost"] = report.final_cost;
  j["iterations"] = report.iterations;
  j["cost_history"] = report.cost_history;
  j["skipped_projections"] = report.skipped_projections;
  j["n_landmarks"] = graph.landmarks.size();
  json failures = json::object();
  for (const auto& [oid, why] : info.init_failures) {
    failures[std::to_string(oid)] = why;
  }
  j["init_failures"] = failures;
  auto rep = open_out(fs::path(out_dir) / ("report_" + mode_name + ".json"));
  rep << j.dump(2) << '\n';

  std::cout << "slam " << mode_name << ": cost " << report.initial_cost
            << " -> " << report.final_cost << " in " << report.iterations
            << " iterations, " << graph.landmarks.size() << " landmarks ("
            << info.init_failures.size() << " init failures)\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& data_dir,
                 const std::string& map_path, std::string out_path) {
  Config cfg = load_config(config_path);
  const Dataset data = load_dataset(data_dir);
  if (data.gt_objects.empty()) {
    throw std::runtime_error("dataset has no objects_gt.txt");
  }
  const auto est = load_objects(map_path);
  const auto counts = count_observations(data.detections, cfg.eval.min_p_det);
  const Plane support(Eigen::Vector3d::UnitZ(), 0.0);
  const EvalSummary summary =
      evaluate_map(est, data.gt_objects, support, counts, cfg.eval);

  if (out_path.empty()) {
    out_path = (fs::path(data_dir) / "metrics.csv").string();
  }
  auto csv = open_out(out_path);
  csv << "object_id,trans_m,rot_deg,shape_jaccard,n_observations\n";
  for (const auto& r : summary.rows) {
    csv << r.object_id << ',' << csv_num(r.trans_m) << ',' << csv_num(r.rot_deg)
        << ',' << csv_num(r.shape_jaccard) << ',' << r.n_observations << '\n';
  }

  json j;
  j["n_valid_objects"] = summary.n_valid;
  j["n_rot_degenerate"] = summary.n_rot_degenerate;
  j["mean_trans_m"] = summary.mean_trans;
  j["mean_rot_deg"] = summary.mean_rot;
  j["mean_shape_jaccard"] = summary.mean_shape;
  auto js = open_out(fs::path(out_path).replace_extension(".json"));
  js << j.dump(2) << '\n';
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_curve(const std::string& config_path, const std::string& data_dir,
              const std::string& mode_str, std::string out_path) {
  Config cfg = load_config(config_path);
  if (!mode_str.empty()) cfg.graph.mode = mode_from_string(mode_str);
  const Dataset data = load_dataset(data_dir);
  if (data.gt_objects.empty()) {
    throw std::runtime_error("dataset has no objects_gt.txt");
  }
  std::vector<Observation> observations;
  const fs::path obs_path = fs::path(data_dir) / "observations.txt";
  if (fs::exists(obs_path)) observations = load_observations(obs_path);

  Scene gt;
  gt.objects = data.gt_objects;
  gt.support = Plane(Eigen::Vector3d::UnitZ(), 0.0);

  const auto rows = convergence_curve(data.odometry_poses(), data.detections,
                                      observations, data.camera, cfg.graph, gt);
  if (out_path.empty()) {
    out_path = (fs::path(data_dir) /
                ("curve_" + mode_to_string(cfg.graph.mode) + ".csv"))
                   .string();
  }
  auto csv = open_out(out_path);
  csv << "count,mean_trans,mean_rot,mean_shape,n_landmarks\n";
  for (const auto& r : rows) {
    csv << r.count << ',' << csv_num(r.mean_trans) << ',' << csv_num(r.mean_rot)
        << ',' << csv_num(r.mean_shape) << ',' << r.n_landmarks << '\n';
  }
  std::cout << "curve with " << rows.size() << " truncation counts -> "
            << out_path << '\n';
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& data_dir,
              std::string out_path) {
  Config cfg = load_config(config_path);
  const Dataset data = load_dataset(data_dir);
  if (data.gt_objects.empty()) {
    throw std::runtime_error("dataset has no objects_gt.txt");
  }
  const auto observations =
      load_observations(fs::path(data_dir) / "observations.txt");

  Scene gt;
  gt.objects = data.gt_objects;
  gt.support = Plane(Eigen::Vector3d::UnitZ(), 0.0);

  const auto rows =
      sweep_epsilon_z(data.odometry_poses(), data.detections, observations,
                      data.camera, cfg.graph, gt, default_epsilon_grid());
  if (out_path.empty()) {
    out_path = (fs::path(data_dir) / "sweep.csv").string();
  }
  auto csv = open_out(out_path);
  csv << "epsilon_z,mean_trans,mean_rot,mean_shape,mean_error\n";
  for (const auto& r : rows) {
    csv << format_sci(r.epsilon_z) << ',' << csv_num(r.mean_trans) << ','
        << csv_num(r.mean_rot) << ',' << csv_num(r.mean_shape) << ','
        << csv_num(r.mean_error) << '\n';
  }
  std::cout << "sweep over " << rows.size() << " grid points -> " << out_path
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-quadric object mapping from RGB-D detections"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir, map_path, mode_str, out_path;
  uint64_t seed = 0;
  double epsilon_z = -1;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  sim->add_option("--config", config_path);
  sim->add_option("--seed", seed);
  sim->add_option("--out", out_dir)->required();

  auto* est = app.add_subcommand("estimate", "single-frame ellipsoid pipeline");
  est->add_option("--config", config_path);
  est->add_option("--seed", seed);
  est->add_option("--data", data_dir)->required();
  est->add_option("--out", out_dir);

  auto* slam = app.add_subcommand("slam", "build and optimize the factor graph");
  slam->add_option("--config", config_path);
  slam->add_option("--data", data_dir)->required();
  slam->add_option("--mode", mode_str, "2d|do|dwb");
  slam->add_option("--epsilon-z", epsilon_z);
  slam->add_option("--out", out_dir);

  auto* eval = app.add_subcommand("evaluate", "metrics against ground truth");
  eval->add_option("--config", config_path);
  eval->add_option("--data", data_dir)->required();
  eval->add_option("--map", map_path)->required();
  eval->add_option("--out", out_path);

  auto* curve = app.add_subcommand("curve", "error vs observation count");
  curve->add_option("--config", config_path);
  curve->add_option("--data", data_dir)->required();
  curve->add_option("--mode", mode_str, "2d|do|dwb");
  curve->add_option("--out", out_path);

  auto* sweep = app.add_subcommand("sweep", "error vs epsilon_z grid");
  sweep->add_option("--config", config_path);
  sweep->add_option("--data", data_dir)->required();
  sweep->add_option("--out", out_path);

  auto* cfg_cmd = app.add_subcommand("config", "print the effective config");
  cfg_cmd->add_option("--config", config_path);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, seed, out_dir);
    if (est->parsed()) return cmd_estimate(config_path, seed, data_dir, out_dir);
    if (slam->parsed()) {
      return cmd_slam(config_path, data_dir, mode_str, epsilon_z, out_dir);
    }
    if (eval->parsed()) {
      return cmd_evaluate(config_path, data_dir, map_path, out_path);
    }
    if (curve->parsed()) {
      return cmd_curve(config_path, data_dir, mode_str, out_path);
    }
    if (sweep->parsed()) return cmd_sweep(config_path, data_dir, out_path);
    if (cfg_cmd->parsed()) {
      Config cfg = load_config(config_path);
      cfg.echo(std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
