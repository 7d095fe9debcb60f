#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qslam/fitting.hpp"
#include "qslam/geometry.hpp"
#include "qslam/segmentation.hpp"

namespace qslam {

struct ProjectionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientViews : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Mode { TwoDOnly, DepthOnly, DwB };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);

struct GraphConfig {
  double epsilon_z = 1e3;     // 3D-vs-2D weight; ~1e3 orbit, ~1e5 forward
  double huber_delta_2d = 10; // px
  double huber_delta_3d = 0.1;
  double huber_delta_odom = 1.0;
  double sigma_2d = 5;  // px
  Vector9d sigma_3d = (Vector9d() << 0.05, 0.05, 0.05, 0.1, 0.1, 0.1, 0.05,
                       0.05, 0.05).finished();
  Vector6d sigma_odom =
      (Vector6d() << 0.01, 0.01, 0.01, 0.005, 0.005, 0.005).finished();
  int max_iterations = 100;
  Mode mode = Mode::DwB;
};

struct OdometryFactor {
  int pose_j = 0;  // constrains pose_j -> pose_j + 1
  Pose u;
};

struct Factor2D {
  int pose_id = 0;
  int landmark_id = 0;
  BBox bbox;
  double p_det = 0;
};

struct Factor3D {
  int pose_id = 0;
  int landmark_id = 0;
  EllipsoidState ellipsoid_c;
  double p_e = 0;
};

/// Pose and landmark nodes plus odometry/2D/3D factors. The first pose is
/// the gauge and stays fixed.
struct FactorGraph {
  Camera camera;
  std::vector<Pose> poses;
  std::vector<EllipsoidState> landmarks;
  std::vector<int> landmark_object_ids;
  std::vector<OdometryFactor> odometry;
  std::vector<Factor2D> factors_2d;
  std::vector<Factor3D> factors_3d;

  int landmark_index(int object_id) const;
};

struct OptimizeReport {
  double initial_cost = 0;
  double final_cost = 0;
  int iterations = 0;
  std::vector<double> cost_history;  // accepted costs, starting at initial
  int skipped_projections = 0;
  std::vector<Pose> poses;
  std::vector<EllipsoidState> landmarks;
};

// Residuals are whitened and carry sqrt(p) so squared norms match the
// probability-weighted constraint costs.
Vector6d residual_odometry(const Pose& x_j, const Pose& u_j, const Pose& x_j1,
                           const Vector6d& sigma);
Vector9d residual_3d(const Pose& x_j, const EllipsoidState& ellipsoid_c,
                     double p_e, const EllipsoidState& landmark,
                     const Vector9d& sigma);
Eigen::Vector4d residual_2d(const Pose& x_j, const BBox& bbox, double p_det,
                            const EllipsoidState& landmark, const Camera& cam,
                            double sigma);

double huber_cost(double r, double delta);

/// Robust total of Eq-style odometry + [eps_z * 3D + 2D] terms, respecting
/// the mode. 2D factors that fail to project are skipped.
double total_cost(const FactorGraph& graph, const GraphConfig& config);

EllipsoidState initialize_landmark_3d(const EllipsoidState& ellipsoid_c,
                                      const Pose& pose);

/// Linear tangency initialization from >= 3 views: each bbox edge
/// back-projects to a plane pi with pi^T Q* pi = 0, solved for the 10
/// unique entries of Q* by SVD.
EllipsoidState initialize_landmark_2d(const std::vector<BBox>& bboxes,
                                      const std::vector<Pose>& poses,
                                      const Camera& cam);

OptimizeReport optimize(FactorGraph& graph, const GraphConfig& config);

/// Per-landmark bookkeeping produced while building a graph.
struct BuildInfo {
  std::map<int, std::string> init_failures;  // object_id -> reason
};

/// Assembles the graph from an odometry trajectory, detections, and 3D
/// observations. Landmark initialization follows the mode: single-frame for
/// DwB/DepthOnly, accumulated multi-view tangency for TwoDOnly.
FactorGraph build_graph(const std::vector<Pose>& odometry_poses,
                        const std::vector<Detection>& detections,
                        const std::vector<Observation>& observations,
                        const Camera& cam, const GraphConfig& config,
                        BuildInfo* info = nullptr);

}  // namespace qslam
