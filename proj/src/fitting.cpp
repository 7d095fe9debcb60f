#include "qslam/fitting.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace qslam {

double algebraic_distance(const Eigen::Vector3d& x, const EllipsoidState& e) {
  const Eigen::Matrix4d q = primal_from_ellipsoid(e);
  const Eigen::Vector4d xh(x.x(), x.y(), x.z(), 1.0);
  return xh.dot(q * xh);
}

double fit_cost(const PointCloud& cloud, const EllipsoidState& e) {
  const Eigen::Matrix4d q = primal_from_ellipsoid(e);
  const double w = std::sqrt(e.s.x() * e.s.y() * e.s.z());
  double cost = 0.0;
  for (const auto& p : cloud) {
    const Eigen::Vector4d xh(p.x(), p.y(), p.z(), 1.0);
    const double r = w * xh.dot(q * xh);
    cost += r * r;
  }
  return cost;
}

namespace {

// Optimization variable: [t, rpy, log s]. Log-axes keep the semi-axes
// strictly positive.
EllipsoidState state_from_params(const Vector9d& p) {
  EllipsoidState e;
  e.t = p.head<3>();
  e.rpy = {wrap_angle(p[3]), wrap_angle(p[4]), wrap_angle(p[5])};
  e.s = p.tail<3>().array().exp();
  return e;
}

Vector9d params_from_state(const EllipsoidState& e) {
  Vector9d p;
  p << e.t, e.rpy, e.s.array().log().matrix();
  return p;
}

void eval_residuals(const PointCloud& cloud, const Vector9d& params,
                    Eigen::VectorXd& r) {
  const EllipsoidState e = state_from_params(params);
  const Eigen::Matrix4d q = primal_from_ellipsoid(e);
  const double w = std::sqrt(e.s.x() * e.s.y() * e.s.z());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector4d xh(cloud[i].x(), cloud[i].y(), cloud[i].z(), 1.0);
    r[long(i)] = w * xh.dot(q * xh);
  }
}

EllipsoidState initial_guess(const PointCloud& cloud, const Plane& support,
                             const std::optional<Eigen::Vector3d>& axis_hint) {
  const Eigen::Vector3d c = centroid(cloud);
  const Eigen::Matrix3d cov = covariance(cloud);

  const Eigen::Vector3d z = support.n;
  Eigen::Vector3d x;
  if (axis_hint) {
    x = *axis_hint - axis_hint->dot(z) * z;
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    x = es.eigenvectors().col(2) - es.eigenvectors().col(2).dot(z) * z;
  }
  if (x.norm() < 1e-9) x = z.unitOrthogonal();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);

  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;

  EllipsoidState e;
  e.t = c;
  e.rpy = matrix_to_rpy(r);
  for (int k = 0; k < 3; ++k) {
    const double var = r.col(k).dot(cov * r.col(k));
    e.s[k] = std::max(0.01, 2.0 * std::sqrt(std::max(0.0, var)));
  }
  return e;
}

}  // namespace

FitResult fit_ellipsoid(const PointCloud& cloud, const Plane& support,
                        const std::optional<Eigen::Vector3d>& axis_hint,
                        const FitParams& params) {
  const long n = long(cloud.size());
  if (n < params.min_points) throw TooFewPoints("cloud below min_points");

  Vector9d x = params_from_state(initial_guess(cloud, support, axis_hint));
  Eigen::VectorXd r(n), r_plus(n), r_minus(n), r_cand(n);
  eval_residuals(cloud, x, r);
  double cost = r.squaredNorm();

  double lambda = params.lm_initial_lambda;
  bool converged = false;
  bool ever_accepted = false;
  int iterations = 0;
  Eigen::Matrix<double, Eigen::Dynamic, 9> jac(n, 9);
  double grad_norm = 0.0;

  for (int iter = 0; iter < params.max_iterations; ++iter) {
    iterations = iter + 1;

    // Central finite differences, relative step.
    for (int k = 0; k < 9; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
      Vector9d xp = x, xm = x;
      xp[k] += h;
      xm[k] -= h;
      eval_residuals(cloud, xp, r_plus);
      eval_residuals(cloud, xm, r_minus);
      jac.col(k) = (r_plus - r_minus) / (2.0 * h);
    }
    const Eigen::Matrix<double, 9, 9> h_mat = jac.transpose() * jac;
    const Vector9d g = jac.transpose() * r;
    grad_norm = g.norm();

    bool accepted = false;
    double improvement = 0.0;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::Matrix<double, 9, 9> damped = h_mat;
      for (int k = 0; k < 9; ++k) {
        damped(k, k) += lambda * std::max(h_mat(k, k), 1e-12);
      }
      const Vector9d delta = damped.ldlt().solve(-g);
      const Vector9d cand = x + delta;
      eval_residuals(cloud, cand, r_cand);
      const double cand_cost = r_cand.squaredNorm();
      if (cand_cost < cost && std::isfinite(cand_cost)) {
        improvement = (cost - cand_cost) / std::max(cost, 1e-300);
        x = cand;
        cost = cand_cost;
        r.swap(r_cand);
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        ever_accepted = true;
        break;
      }
      lambda *= 10.0;
      if (lambda > 1e14) break;
    }

    if (!accepted) {
      converged = grad_norm <= 1e-6 * (1.0 + cost);
      break;
    }
    if (improvement < params.convergence_tol) {
      converged = true;
      break;
    }
  }

  if (!ever_accepted && !converged) {
    throw SolverDiverged("no acceptable step under growing damping");
  }

  FitResult result;
  result.ellipsoid = state_from_params(x);
  result.residual_t = cost / double(n);
  result.p_fit = fit_probability(result.residual_t);
  result.iterations = iterations;
  result.converged = converged;
  return result;
}

double fit_probability(double residual_t) {
  return std::pow(2.0 * kPi, -0.5) * std::exp(-0.5 * residual_t);
}

double combine_probability(double p_det, double p_sym, double p_fit) {
  return p_det * p_sym * p_fit;
}

std::optional<Observation> estimate_object(const SegmentedObject& seg,
                                           int frame_id, int object_id,
                                           const SymmetryParams& sym_params,
                                           const FitParams& fit_params,
                                           const SymmetryTable& table,
                                           std::vector<std::string>* diagnostics) {
  const auto log = [&](const std::string& msg) {
    if (diagnostics) {
      diagnostics->push_back("frame " + std::to_string(frame_id) + " object " +
                             std::to_string(object_id) + ": " + msg);
    }
  };

  SymmetryResult sym;
  try {
    sym = estimate_symmetry(seg.cloud, seg.support_plane, seg.label, sym_params,
                            table);
  } catch (const DegenerateCloud& e) {
    log(std::string("symmetry: ") + e.what());
    return std::nullopt;
  }

  FitResult fit;
  try {
    fit = fit_ellipsoid(sym.completed, seg.support_plane, sym.planes[0].n,
                        fit_params);
  } catch (const TooFewPoints& e) {
    log(std::string("fit: ") + e.what());
    return std::nullopt;
  } catch (const SolverDiverged& e) {
    log(std::string("fit: ") + e.what());
    return std::nullopt;
  }

  Observation obs;
  obs.frame_id = frame_id;
  obs.object_id = object_id;
  obs.bbox = seg.bbox;
  obs.p_det = seg.p_det;
  obs.ellipsoid_c = fit.ellipsoid;
  obs.p_e = combine_probability(seg.p_det, sym.p_sym, fit.p_fit);
  return obs;
}

std::vector<Observation> estimate_single_frame(
    const DepthImage& depth, const Camera& cam,
    const std::vector<Detection>& detections,
    const SegmentationParams& seg_params, const SymmetryParams& sym_params,
    const FitParams& fit_params, const SymmetryTable& table, Rng& rng,
    std::vector<std::string>* diagnostics) {
  std::vector<Observation> observations;
  if (detections.empty()) return observations;

  std::vector<PlaneHypothesis> candidates;
  try {
    const PointCloud full = backproject(depth, cam);
    candidates = filter_support_planes(extract_planes(full, seg_params, rng),
                                       seg_params);
  } catch (const EmptyRegion&) {
    if (diagnostics) diagnostics->push_back("frame has no valid depths");
    return observations;
  }

  for (const auto& det : detections) {
    const auto seg = segment_object(depth, cam, det, candidates, seg_params);
    if (!seg) {
      if (diagnostics) {
        diagnostics->push_back("frame " + std::to_string(det.frame_id) +
                               " object " + std::to_string(det.object_id) +
                               ": segmentation yielded no cloud");
      }
      continue;
    }
    auto obs = estimate_object(*seg, det.frame_id, det.object_id, sym_params,
                               fit_params, table, diagnostics);
    if (obs) observations.push_back(*obs);
  }
  return observations;
}

}  // namespace qslam
