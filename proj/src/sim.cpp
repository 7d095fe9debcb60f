#include "qslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace qslam {

namespace {

constexpr double kFloorRadius = 8.0;

Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  // Camera axes: x right, y down, z forward; world is z-up.
  Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ());
  if (x.norm() < 1e-9) x = z.cross(Eigen::Vector3d::UnitY());
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  Pose p;
  p.t = eye;
  p.q = Eigen::Quaterniond(r).normalized();
  return p;
}

Eigen::Vector3d fibonacci_dir(int k, int n) {
  const double z = 1.0 - 2.0 * (k + 0.5) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double phi = k * golden;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

Scene generate_default_scene(uint64_t seed) {
  Scene scene;
  scene.seed = seed;
  scene.support = Plane(Eigen::Vector3d::UnitZ(), 0.0);
  const auto add = [&](int id, const std::string& label, double x, double y,
                       double yaw, double s1, double s2, double s3) {
    SceneObject o;
    o.object_id = id;
    o.label = label;
    o.state.t = {x, y, s3};
    o.state.rpy = {0, 0, yaw};
    o.state.s = {s1, s2, s3};
    scene.objects.push_back(o);
  };
  add(0, "chair", -0.65, 0.55, 0.35, 0.40, 0.16, 0.26);
  add(1, "laptop", 0.75, 0.65, -0.50, 0.50, 0.33, 0.22);
  add(2, "chair", -0.15, -0.25, 0.90, 0.26, 0.21, 0.40);
  add(3, "cup", 0.40, -0.40, -1.10, 0.18, 0.12, 0.10);
  add(4, "laptop", 0.05, 0.95, 0.60, 0.23, 0.10, 0.07);
  add(5, "pottedplant", -0.55, -0.60, 0.20, 0.20, 0.12, 0.16);
  return scene;
}

Trajectory generate_trajectory(const TrajectorySpec& spec, Rng& rng) {
  Trajectory out;
  const int n = spec.n_frames;
  out.gt.reserve(n);

  if (spec.mode == TrajectoryMode::Orbit) {
    const Eigen::Vector3d target(0, 0, 0.15);
    for (int i = 0; i < n; ++i) {
      const double theta = 2.0 * kPi * i / n;
      const Eigen::Vector3d eye(spec.orbit_radius * std::cos(theta),
                                spec.orbit_radius * std::sin(theta),
                                spec.camera_height);
      out.gt.push_back(look_at(eye, target));
    }
  } else {
    // Straight line along +y, aimed at a fixed far target slightly off to
    // the side of the objects: a small off-axis angle that drifts a few
    // degrees as the robot advances, like a real forward run.
    const double spacing = n > 1 ? spec.forward_length / (n - 1) : 0.0;
    const Eigen::Vector3d target(0.10, 2.0, 0.25);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d eye(-0.55, -3.2 + spacing * i, spec.camera_height);
      out.gt.push_back(look_at(eye, target));
    }
  }

  out.odom_relative.reserve(std::max(0, n - 1));
  out.odom_integrated.reserve(n);
  out.odom_integrated.push_back(out.gt.front());
  for (int i = 0; i + 1 < n; ++i) {
    Pose u = out.gt[i].inverse() * out.gt[i + 1];
    if (spec.odom_sigma_t > 0 || spec.odom_sigma_r > 0) {
      Vector6d xi;
      xi.head<3>() = rng.normal_vec3(spec.odom_sigma_t);
      xi.tail<3>() = rng.normal_vec3(spec.odom_sigma_r);
      u = u * se3_exp(xi);
    }
    out.odom_relative.push_back(u);
    out.odom_integrated.push_back(out.odom_integrated.back() * u);
  }
  return out;
}

std::vector<FrameData> synthesize_observations(const Scene& scene,
                                               const std::vector<Pose>& poses,
                                               const Camera& cam,
                                               const NoiseSpec& noise,
                                               Rng& rng) {
  std::vector<FrameData> frames;
  frames.reserve(poses.size());

  for (size_t j = 0; j < poses.size(); ++j) {
    Rng frame_rng = rng.fork(j);
    FrameData frame;
    frame.frame_id = int(j);
    frame.support_cam = transform_plane(scene.support, poses[j].inverse());

    for (size_t i = 0; i < scene.objects.size(); ++i) {
      const auto& obj = scene.objects[i];
      BBox box;
      try {
        box = conic_bbox(
            project_dual(ellipsoid_to_dual(obj.state), poses[j], cam));
      } catch (const BehindCamera&) {
        continue;
      } catch (const Unbounded&) {
        continue;
      }
      box.x_min += frame_rng.normal(0, noise.bbox_sigma);
      box.y_min += frame_rng.normal(0, noise.bbox_sigma);
      box.x_max += frame_rng.normal(0, noise.bbox_sigma);
      box.y_max += frame_rng.normal(0, noise.bbox_sigma);
      const double p_det = frame_rng.uniform(noise.p_det_min, noise.p_det_max);

      // The detector would clip boxes at the border; edge-touching boxes
      // are filtered out entirely.
      if (box.x_min <= 0 || box.y_min <= 0 || box.x_max >= cam.width - 1 ||
          box.y_max >= cam.height - 1 || !box.valid()) {
        continue;
      }

      Detection det;
      det.frame_id = int(j);
      det.object_id = obj.object_id;
      det.label = obj.label;
      det.bbox = box;
      det.p_det = p_det;
      frame.detections.push_back(det);

      const Eigen::Matrix3d r = obj.state.rotation();
      const Eigen::Vector3d s = obj.state.s;
      const Pose world_to_cam = poses[j].inverse();
      PointCloud cloud;
      cloud.reserve(noise.samples_per_object / 2);
      for (int k = 0; k < noise.samples_per_object; ++k) {
        const Eigen::Vector3d u = fibonacci_dir(k, noise.samples_per_object);
        Eigen::Vector3d pw = obj.state.t + r * s.cwiseProduct(u).eval();
        const Eigen::Vector3d normal =
            (r * u.cwiseQuotient(s).eval()).normalized();
        const Eigen::Vector3d view = (pw - poses[j].t).normalized();
        if (normal.dot(view) >= 0) continue;  // self-occluded hemisphere
        pw += view * frame_rng.normal(0, noise.depth_sigma);
        cloud.push_back(world_to_cam.apply(pw));
      }
      frame.clouds.emplace_back(obj.object_id, std::move(cloud));
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

DepthImage render_depth(const Scene& scene, const Pose& pose, const Camera& cam,
                        const NoiseSpec& noise, Rng& rng,
                        std::vector<int>* labels) {
  DepthImage depth;
  depth.width = cam.width;
  depth.height = cam.height;
  depth.samples.assign(size_t(cam.width) * cam.height, 0);
  if (labels) labels->assign(depth.samples.size(), -1);

  std::vector<Eigen::Matrix4d> primals;
  primals.reserve(scene.objects.size());
  for (const auto& o : scene.objects) {
    primals.push_back(primal_from_ellipsoid(o.state));
  }

  const Eigen::Matrix3d r = pose.rotation();
  const Eigen::Vector3d origin = pose.t;

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      // Camera-frame direction with unit z, so the ray parameter is depth.
      const Eigen::Vector3d dir =
          r * Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);

      double best_t = std::numeric_limits<double>::infinity();
      int best_label = -1;

      const double denom = scene.support.n.dot(dir);
      if (std::abs(denom) > 1e-12) {
        const double t = -point_plane_distance(origin, scene.support) / denom;
        if (t > 1e-6) {
          const Eigen::Vector3d hit = origin + t * dir;
          if (hit.head<2>().norm() <= kFloorRadius) {
            best_t = t;
            best_label = -2;
          }
        }
      }

      for (size_t i = 0; i < primals.size(); ++i) {
        const Eigen::Matrix3d a = primals[i].topLeftCorner<3, 3>();
        const Eigen::Vector3d bh = primals[i].topRightCorner<3, 1>();
        const double c22 = primals[i](3, 3);
        const double qa = dir.dot(a * dir);
        const double qb = 2.0 * dir.dot(a * origin + bh);
        const double qc = origin.dot(a * origin) + 2.0 * bh.dot(origin) + c22;
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc <= 0 || std::abs(qa) < 1e-15) continue;
        const double sq = std::sqrt(disc);
        const double t1 = (-qb - sq) / (2.0 * qa);
        const double t2 = (-qb + sq) / (2.0 * qa);
        double t = std::numeric_limits<double>::infinity();
        if (t1 > 1e-6) t = t1;
        else if (t2 > 1e-6) t = t2;
        if (t < best_t) {
          best_t = t;
          best_label = int(i);
        }
      }

      if (!std::isfinite(best_t)) continue;
      double z = best_t + rng.normal(0, noise.depth_sigma);
      const long counts = std::lround(z * depth.depth_scale);
      if (counts <= 0 || counts > 65535) continue;
      depth.at(u, v) = uint16_t(counts);
      if (labels) (*labels)[size_t(v) * cam.width + u] = best_label;
    }
  }
  return depth;
}

double metric_trans(const EllipsoidState& est, const EllipsoidState& gt) {
  return (est.t - gt.t).norm();
}

namespace {

// In-plane projection of the semi-axis with the largest footprint.
Eigen::Vector3d main_axis_projection(const EllipsoidState& e,
                                     const Plane& support) {
  const Eigen::Matrix3d r = e.rotation();
  int best = 0;
  double best_len = -1;
  Eigen::Vector3d best_proj = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector3d axis = r.col(k);
    const Eigen::Vector3d proj = axis - axis.dot(support.n) * support.n;
    const double len = e.s[k] * proj.norm();
    if (len > best_len + 1e-12) {
      best_len = len;
      best = k;
      best_proj = proj;
    }
  }
  (void)best;
  if (best_proj.norm() < 1e-9) {
    throw DegenerateAxis("main axis parallel to the support normal");
  }
  return best_proj.normalized();
}

}  // namespace

double metric_rot(const EllipsoidState& est, const EllipsoidState& gt,
                  const Plane& support) {
  const Eigen::Vector3d a = main_axis_projection(est, support);
  const Eigen::Vector3d b = main_axis_projection(gt, support);
  const double c = std::clamp(std::abs(a.dot(b)), 0.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

double metric_shape(const EllipsoidState& est, const EllipsoidState& gt) {
  const auto half_extents = [](const EllipsoidState& e) {
    const Eigen::Matrix3d rs = e.rotation() * e.s.asDiagonal();
    Eigen::Vector3d h;
    for (int k = 0; k < 3; ++k) h[k] = rs.row(k).norm();
    return h;
  };
  const Eigen::Vector3d a = half_extents(est);
  const Eigen::Vector3d b = half_extents(gt);
  const Eigen::Vector3d inter = a.cwiseMin(b);
  const double vi = 8.0 * inter.prod();
  const double vu = 8.0 * a.prod() + 8.0 * b.prod() - vi;
  return 1.0 - vi / vu;
}

std::map<int, int> count_observations(const std::vector<Detection>& detections,
                                      double min_p_det) {
  std::map<int, int> counts;
  for (const auto& d : detections) {
    if (d.p_det > min_p_det) ++counts[d.object_id];
  }
  return counts;
}

EvalSummary evaluate_map(const std::vector<SceneObject>& estimated,
                         const std::vector<SceneObject>& ground_truth,
                         const Plane& support,
                         const std::map<int, int>& observation_counts,
                         const EvalParams& params) {
  EvalSummary summary;
  double sum_t = 0, sum_r = 0, sum_s = 0;
  int n_rot = 0;

  for (const auto& gt : ground_truth) {
    const auto it_count = observation_counts.find(gt.object_id);
    const int n_obs = it_count == observation_counts.end() ? 0 : it_count->second;
    if (n_obs < params.min_observations) continue;

    const auto est = std::find_if(
        estimated.begin(), estimated.end(),
        [&](const SceneObject& o) { return o.object_id == gt.object_id; });
    if (est == estimated.end()) continue;

    EvalRow row;
    row.object_id = gt.object_id;
    row.n_observations = n_obs;
    row.trans_m = metric_trans(est->state, gt.state);
    row.shape_jaccard = metric_shape(est->state, gt.state);
    try {
      row.rot_deg = metric_rot(est->state, gt.state, support);
      sum_r += row.rot_deg;
      ++n_rot;
    } catch (const DegenerateAxis&) {
      row.rot_deg = std::numeric_limits<double>::quiet_NaN();
      ++summary.n_rot_degenerate;
    }
    sum_t += row.trans_m;
    sum_s += row.shape_jaccard;
    summary.rows.push_back(row);
  }

  summary.n_valid = int(summary.rows.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  summary.mean_trans = summary.rows.empty() ? nan : sum_t / summary.rows.size();
  summary.mean_shape = summary.rows.empty() ? nan : sum_s / summary.rows.size();
  summary.mean_rot = n_rot == 0 ? nan : sum_r / n_rot;
  return summary;
}

namespace {

CurveRow evaluate_graph_against(const FactorGraph& graph, const Scene& gt_scene,
                                int count) {
  CurveRow row;
  row.count = count;
  row.n_landmarks = int(graph.landmarks.size());
  double sum_t = 0, sum_r = 0, sum_s = 0;
  int n = 0, n_rot = 0;
  for (size_t i = 0; i < graph.landmarks.size(); ++i) {
    const int oid = graph.landmark_object_ids[i];
    const auto gt = std::find_if(
        gt_scene.objects.begin(), gt_scene.objects.end(),
        [&](const SceneObject& o) { return o.object_id == oid; });
    if (gt == gt_scene.objects.end()) continue;
    sum_t += metric_trans(graph.landmarks[i], gt->state);
    sum_s += metric_shape(graph.landmarks[i], gt->state);
    ++n;
    try {
      sum_r += metric_rot(graph.landmarks[i], gt->state, gt_scene.support);
      ++n_rot;
    } catch (const DegenerateAxis&) {
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  row.mean_trans = n == 0 ? nan : sum_t / n;
  row.mean_shape = n == 0 ? nan : sum_s / n;
  row.mean_rot = n_rot == 0 ? nan : sum_r / n_rot;
  return row;
}

}  // namespace

std::vector<CurveRow> convergence_curve(const std::vector<Pose>& odometry_poses,
                                        const std::vector<Detection>& detections,
                                        const std::vector<Observation>& observations,
                                        const Camera& cam,
                                        const GraphConfig& config,
                                        const Scene& gt_scene) {
  std::map<int, int> totals;
  for (const auto& d : detections) ++totals[d.object_id];
  int max_count = 0;
  for (const auto& [oid, c] : totals) max_count = std::max(max_count, c);

  std::vector<CurveRow> rows;
  for (int count = 1; count <= max_count; ++count) {
    std::map<int, int> taken;
    std::map<int, std::set<int>> kept_frames;
    std::vector<Detection> dets;
    for (const auto& d : detections) {
      if (taken[d.object_id] >= count) continue;
      ++taken[d.object_id];
      kept_frames[d.object_id].insert(d.frame_id);
      dets.push_back(d);
    }
    std::vector<Observation> obs;
    for (const auto& o : observations) {
      const auto it = kept_frames.find(o.object_id);
      if (it != kept_frames.end() && it->second.count(o.frame_id)) {
        obs.push_back(o);
      }
    }

    FactorGraph graph =
        build_graph(odometry_poses, dets, obs, cam, config, nullptr);
    optimize(graph, config);
    rows.push_back(evaluate_graph_against(graph, gt_scene, count));
  }
  return rows;
}

std::vector<double> default_epsilon_grid() {
  std::vector<double> grid;
  for (int e = 0; e <= 7; ++e) grid.push_back(std::pow(10.0, e));
  return grid;
}

std::vector<SweepRow> sweep_epsilon_z(const std::vector<Pose>& odometry_poses,
                                      const std::vector<Detection>& detections,
                                      const std::vector<Observation>& observations,
                                      const Camera& cam, GraphConfig config,
                                      const Scene& gt_scene,
                                      const std::vector<double>& grid) {
  config.mode = Mode::DwB;
  std::vector<SweepRow> rows;
  for (const double eps : grid) {
    config.epsilon_z = eps;
    FactorGraph graph =
        build_graph(odometry_poses, detections, observations, cam, config,
                    nullptr);
    optimize(graph, config);
    const CurveRow r = evaluate_graph_against(graph, gt_scene, 0);
    SweepRow row;
    row.epsilon_z = eps;
    row.mean_trans = r.mean_trans;
    row.mean_rot = r.mean_rot;
    row.mean_shape = r.mean_shape;
    row.mean_error = 0.5 * (r.mean_trans + r.mean_shape);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qslam
