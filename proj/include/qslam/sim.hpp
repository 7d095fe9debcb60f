#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qslam/backend.hpp"
#include "qslam/fitting.hpp"
#include "qslam/geometry.hpp"
#include "qslam/random.hpp"
#include "qslam/segmentation.hpp"

namespace qslam {

struct DegenerateAxis : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SceneObject {
  int object_id = 0;
  std::string label;
  EllipsoidState state;  // world frame
};

struct Scene {
  std::vector<SceneObject> objects;
  Plane support = Plane(Eigen::Vector3d::UnitZ(), 0.0);
  uint64_t seed = 0;
};

enum class TrajectoryMode { Orbit, Forward };

struct TrajectorySpec {
  TrajectoryMode mode = TrajectoryMode::Orbit;
  int n_frames = 36;
  double orbit_radius = 2.2;
  double forward_length = 3.0;
  double camera_height = 1.2;
  double odom_sigma_t = 0.0;    // m per step
  double odom_sigma_r = 0.0;    // rad per step
};

struct NoiseSpec {
  double bbox_sigma = 1.0;      // px
  double depth_sigma = 0.004;   // m
  double p_det_min = 0.96;
  double p_det_max = 1.0;
  int samples_per_object = 1200;
};

struct Trajectory {
  std::vector<Pose> gt;
  std::vector<Pose> odom_relative;    // u_j, gt step composed with noise
  std::vector<Pose> odom_integrated;  // gt[0] chained through u_j
};

/// Per-frame synthetic measurements; clouds are camera-frame envelope
/// samples keyed by object id.
struct FrameData {
  int frame_id = 0;
  std::vector<Detection> detections;
  std::vector<std::pair<int, PointCloud>> clouds;
  Plane support_cam;  // scene support plane in this camera frame
};

/// Six desk-scale objects: five from the symmetry table plus one asymmetric
/// distractor label.
Scene generate_default_scene(uint64_t seed);

Trajectory generate_trajectory(const TrajectorySpec& spec, Rng& rng);

/// Projected detections (noisy, edge-filtered) plus visible-surface clouds.
std::vector<FrameData> synthesize_observations(const Scene& scene,
                                               const std::vector<Pose>& poses,
                                               const Camera& cam,
                                               const NoiseSpec& noise, Rng& rng);

/// Analytic raycast of the scene plus a floor disc. labels: -1 invalid,
/// -2 floor, otherwise the index into scene.objects.
DepthImage render_depth(const Scene& scene, const Pose& pose, const Camera& cam,
                        const NoiseSpec& noise, Rng& rng,
                        std::vector<int>* labels = nullptr);

double metric_trans(const EllipsoidState& est, const EllipsoidState& gt);

/// Angle between the in-plane projections of the two main axes, folded to
/// [0, 90] degrees.
double metric_rot(const EllipsoidState& est, const EllipsoidState& gt,
                  const Plane& support);

/// Jaccard distance of origin-translated world-axis-aligned bounding boxes.
double metric_shape(const EllipsoidState& est, const EllipsoidState& gt);

struct EvalRow {
  int object_id = 0;
  double trans_m = 0;
  double rot_deg = 0;  // NaN when the main axis is degenerate
  double shape_jaccard = 0;
  int n_observations = 0;
};

struct EvalParams {
  int min_observations = 5;
  double min_p_det = 0.95;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  double mean_trans = 0;
  double mean_rot = 0;
  double mean_shape = 0;
  int n_valid = 0;
  int n_rot_degenerate = 0;
};

/// Compares estimated landmarks against ground truth over the valid objects
/// (enough confident observations). Means skip degenerate rotation rows.
EvalSummary evaluate_map(const std::vector<SceneObject>& estimated,
                         const std::vector<SceneObject>& ground_truth,
                         const Plane& support,
                         const std::map<int, int>& observation_counts,
                         const EvalParams& params);

std::map<int, int> count_observations(const std::vector<Detection>& detections,
                                      double min_p_det);

struct CurveRow {
  int count = 0;
  double mean_trans = 0;
  double mean_rot = 0;
  double mean_shape = 0;
  int n_landmarks = 0;
};

/// Re-optimizes the graph truncated to the first 1..N observations of every
/// landmark. No valid-object filter: early counts would otherwise be empty.
std::vector<CurveRow> convergence_curve(const std::vector<Pose>& odometry_poses,
                                        const std::vector<Detection>& detections,
                                        const std::vector<Observation>& observations,
                                        const Camera& cam,
                                        const GraphConfig& config,
                                        const Scene& gt_scene);

struct SweepRow {
  double epsilon_z = 0;
  double mean_trans = 0;
  double mean_rot = 0;
  double mean_shape = 0;
  double mean_error = 0;  // (trans + shape) / 2, the sweep objective
};

/// One DwB optimization per grid value of epsilon_z.
std::vector<SweepRow> sweep_epsilon_z(const std::vector<Pose>& odometry_poses,
                                      const std::vector<Detection>& detections,
                                      const std::vector<Observation>& observations,
                                      const Camera& cam, GraphConfig config,
                                      const Scene& gt_scene,
                                      const std::vector<double>& grid);

/// Log-spaced default grid 10^0 .. 10^7.
std::vector<double> default_epsilon_grid();

}  // namespace qslam
