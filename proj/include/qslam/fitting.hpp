#pragma once

#include <optional>
#include <string>
#include <vector>

#include "qslam/geometry.hpp"
#include "qslam/point_cloud.hpp"
#include "qslam/segmentation.hpp"
#include "qslam/symmetry.hpp"

namespace qslam {

struct TooFewPoints : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FitParams {
  int max_iterations = 50;
  double lm_initial_lambda = 1e-3;
  double convergence_tol = 1e-8;  // relative cost decrease
  int min_points = 30;
};

struct FitResult {
  EllipsoidState ellipsoid;
  double residual_t = 0;  // mean squared weighted residual
  double p_fit = 0;
  int iterations = 0;
  bool converged = false;
};

/// Per-frame, per-object result of the single-frame estimation pipeline.
struct Observation {
  int frame_id = 0;
  int object_id = 0;
  BBox bbox;
  double p_det = 0;
  EllipsoidState ellipsoid_c;  // camera frame
  double p_e = 0;
};

/// Algebraic distance X^T Q X with Q normalized to -1 at the center and 0 on
/// the surface.
double algebraic_distance(const Eigen::Vector3d& x, const EllipsoidState& e);

/// Volume-weighted least-squares cost: sum of (sqrt(s1 s2 s3) F(X, e))^2.
double fit_cost(const PointCloud& cloud, const EllipsoidState& e);

/// Levenberg-Marquardt over (t, rpy, log s). The support normal seeds the
/// initial vertical axis; axis_hint, when given, seeds the in-plane
/// orientation (typically the refined symmetry-plane normal).
FitResult fit_ellipsoid(const PointCloud& cloud, const Plane& support,
                        const std::optional<Eigen::Vector3d>& axis_hint,
                        const FitParams& params);

double fit_probability(double residual_t);
double combine_probability(double p_det, double p_sym, double p_fit);

/// Symmetry completion plus fitting for one segmented object.
std::optional<Observation> estimate_object(const SegmentedObject& seg,
                                           int frame_id, int object_id,
                                           const SymmetryParams& sym_params,
                                           const FitParams& fit_params,
                                           const SymmetryTable& table,
                                           std::vector<std::string>* diagnostics);

/// Full single-frame pipeline over all detections of one depth frame.
/// Detections failing any stage are dropped and logged.
std::vector<Observation> estimate_single_frame(
    const DepthImage& depth, const Camera& cam,
    const std::vector<Detection>& detections,
    const SegmentationParams& seg_params, const SymmetryParams& sym_params,
    const FitParams& fit_params, const SymmetryTable& table, Rng& rng,
    std::vector<std::string>* diagnostics);

}  // namespace qslam
