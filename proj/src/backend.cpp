#include "qslam/backend.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace qslam {

Mode mode_from_string(const std::string& s) {
  if (s == "2d") return Mode::TwoDOnly;
  if (s == "do") return Mode::DepthOnly;
  if (s == "dwb") return Mode::DwB;
  throw std::runtime_error("unknown mode: " + s + " (expected 2d|do|dwb)");
}

std::string mode_to_string(Mode m) {
  switch (m) {
    case Mode::TwoDOnly: return "2d";
    case Mode::DepthOnly: return "do";
    case Mode::DwB: return "dwb";
  }
  return "?";
}

int FactorGraph::landmark_index(int object_id) const {
  for (size_t i = 0; i < landmark_object_ids.size(); ++i) {
    if (landmark_object_ids[i] == object_id) return int(i);
  }
  return -1;
}

namespace {

// World-frame 9-vector of a camera-frame ellipsoid under pose x_j, i.e.
// v(H Q* H^T) without round-tripping through the 4x4 matrices. Axes are
// sorted descending like decompose_dual; the axis-flip ambiguity (four
// proper rotations describe the same ellipsoid) is resolved toward the
// landmark so that geometrically identical states give a zero residual.
Vector9d observed_world_vector(const Pose& x_j, const EllipsoidState& obs,
                               const EllipsoidState& landmark) {
  Eigen::Matrix3d r_in = x_j.rotation() * obs.rotation();
  Eigen::Vector3d s_in = obs.s;

  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return s_in[a] > s_in[b] + 1e-9; });
  Eigen::Matrix3d r;
  Eigen::Vector3d s;
  for (int k = 0; k < 3; ++k) {
    r.col(k) = r_in.col(order[k]);
    s[k] = s_in[order[k]];
  }
  if (r.determinant() < 0) r.col(2) = -r.col(2);

  const Eigen::Matrix3d ref = landmark.rotation();
  static const std::array<Eigen::Vector3d, 4> flips = {
      Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, -1, -1),
      Eigen::Vector3d(-1, 1, -1), Eigen::Vector3d(-1, -1, 1)};
  Eigen::Matrix3d best = r;
  double best_align = (ref.transpose() * r).trace();
  for (const auto& f : flips) {
    const Eigen::Matrix3d cand = r * f.asDiagonal();
    const double align = (ref.transpose() * cand).trace();
    if (align > best_align) {
      best_align = align;
      best = cand;
    }
  }

  Vector9d v;
  v << x_j.apply(obs.t), matrix_to_rpy(best), s;
  return v;
}

}  // namespace

Vector6d residual_odometry(const Pose& x_j, const Pose& u_j, const Pose& x_j1,
                           const Vector6d& sigma) {
  const Pose predicted = x_j * u_j;
  const Vector6d err = se3_log(predicted.inverse() * x_j1);
  return err.cwiseQuotient(sigma);
}

Vector9d residual_3d(const Pose& x_j, const EllipsoidState& ellipsoid_c,
                     double p_e, const EllipsoidState& landmark,
                     const Vector9d& sigma) {
  Vector9d diff =
      observed_world_vector(x_j, ellipsoid_c, landmark) - landmark.vector();
  for (int k = 3; k < 6; ++k) diff[k] = wrap_angle(diff[k]);
  return std::sqrt(p_e) * diff.cwiseQuotient(sigma);
}

Eigen::Vector4d residual_2d(const Pose& x_j, const BBox& bbox, double p_det,
                            const EllipsoidState& landmark, const Camera& cam,
                            double sigma) {
  BBox projected;
  try {
    projected = conic_bbox(project_dual(ellipsoid_to_dual(landmark), x_j, cam));
  } catch (const BehindCamera& e) {
    throw ProjectionFailed(e.what());
  } catch (const Unbounded& e) {
    throw ProjectionFailed(e.what());
  } catch (const NotAnEllipsoid& e) {
    throw ProjectionFailed(e.what());
  }
  return std::sqrt(p_det) / sigma * (bbox.vector() - projected.vector());
}

double huber_cost(double r, double delta) {
  if (r <= delta) return 0.5 * r * r;
  return delta * (r - 0.5 * delta);
}

namespace {

struct CostTerms {
  double total = 0;
  int skipped = 0;
};

CostTerms eval_cost(const std::vector<Pose>& poses,
                    const std::vector<EllipsoidState>& landmarks,
                    const FactorGraph& graph, const GraphConfig& config) {
  CostTerms out;
  const double delta_2d = config.huber_delta_2d / config.sigma_2d;
  for (const auto& f : graph.odometry) {
    const Vector6d r =
        residual_odometry(poses[f.pose_j], f.u, poses[f.pose_j + 1],
                          config.sigma_odom);
    out.total += huber_cost(r.norm(), config.huber_delta_odom);
  }
  if (config.mode != Mode::TwoDOnly) {
    for (const auto& f : graph.factors_3d) {
      const Vector9d r = residual_3d(poses[f.pose_id], f.ellipsoid_c, f.p_e,
                                     landmarks[f.landmark_id], config.sigma_3d);
      out.total += config.epsilon_z * huber_cost(r.norm(), config.huber_delta_3d);
    }
  }
  if (config.mode != Mode::DepthOnly) {
    for (const auto& f : graph.factors_2d) {
      try {
        const Eigen::Vector4d r =
            residual_2d(poses[f.pose_id], f.bbox, f.p_det,
                        landmarks[f.landmark_id], graph.camera, config.sigma_2d);
        out.total += huber_cost(r.norm(), delta_2d);
      } catch (const ProjectionFailed&) {
        ++out.skipped;
      }
    }
  }
  return out;
}

}  // namespace

double total_cost(const FactorGraph& graph, const GraphConfig& config) {
  return eval_cost(graph.poses, graph.landmarks, graph, config).total;
}

EllipsoidState initialize_landmark_3d(const EllipsoidState& ellipsoid_c,
                                      const Pose& pose) {
  return decompose_dual(transform_dual(ellipsoid_to_dual(ellipsoid_c), pose));
}

EllipsoidState initialize_landmark_2d(const std::vector<BBox>& bboxes,
                                      const std::vector<Pose>& poses,
                                      const Camera& cam) {
  if (bboxes.size() != poses.size()) {
    throw std::invalid_argument("bbox/pose count mismatch");
  }
  if (bboxes.size() < 3) {
    throw InsufficientViews("need at least 3 views");
  }

  Eigen::MatrixXd a(4 * bboxes.size(), 10);
  long row = 0;
  for (size_t v = 0; v < bboxes.size(); ++v) {
    const Eigen::Matrix<double, 3, 4> p =
        cam.k_matrix() * poses[v].inverse().matrix().topRows<3>();
    const std::array<Eigen::Vector3d, 4> lines = {
        Eigen::Vector3d(1, 0, -bboxes[v].x_min),
        Eigen::Vector3d(1, 0, -bboxes[v].x_max),
        Eigen::Vector3d(0, 1, -bboxes[v].y_min),
        Eigen::Vector3d(0, 1, -bboxes[v].y_max)};
    for (const auto& l : lines) {
      Eigen::Vector4d pi = p.transpose() * l;
      pi.normalize();
      a.row(row++) << pi[0] * pi[0], 2 * pi[0] * pi[1], 2 * pi[0] * pi[2],
          2 * pi[0] * pi[3], pi[1] * pi[1], 2 * pi[1] * pi[2],
          2 * pi[1] * pi[3], pi[2] * pi[2], 2 * pi[2] * pi[3], pi[3] * pi[3];
    }
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
  const Eigen::Matrix<double, 10, 1> q = svd.matrixV().col(9);

  DualQuadric dual;
  dual.m << q[0], q[1], q[2], q[3],
            q[1], q[4], q[5], q[6],
            q[2], q[5], q[7], q[8],
            q[3], q[6], q[8], q[9];
  return decompose_dual(dual);
}

namespace {

Pose perturb_pose(const Pose& p, int dim, double h) {
  Vector6d d = Vector6d::Zero();
  d[dim] = h;
  return p * se3_exp(d);
}

EllipsoidState perturb_landmark(const EllipsoidState& e, int dim, double h) {
  EllipsoidState out = e;
  if (dim < 3) {
    out.t[dim] += h;
  } else if (dim < 6) {
    out.rpy[dim - 3] = wrap_angle(out.rpy[dim - 3] + h);
  } else {
    out.s[dim - 6] *= std::exp(h);
  }
  return out;
}

void apply_pose_delta(Pose& p, const Eigen::Ref<const Vector6d>& d) {
  p = p * se3_exp(d);
  p.normalize();
}

void apply_landmark_delta(EllipsoidState& e,
                          const Eigen::Ref<const Vector9d>& d) {
  e.t += d.head<3>();
  for (int k = 0; k < 3; ++k) e.rpy[k] = wrap_angle(e.rpy[k] + d[3 + k]);
  e.s = e.s.cwiseProduct(d.tail<3>().array().exp().matrix());
}

constexpr double kJacStep = 1e-6;

}  // namespace

OptimizeReport optimize(FactorGraph& graph, const GraphConfig& config) {
  const int n_poses = int(graph.poses.size());
  const int n_landmarks = int(graph.landmarks.size());
  const int n_vars = 6 * std::max(0, n_poses - 1) + 9 * n_landmarks;

  std::vector<Pose> poses = graph.poses;
  std::vector<EllipsoidState> landmarks = graph.landmarks;

  const auto pose_offset = [&](int j) { return j == 0 ? -1 : 6 * (j - 1); };
  const auto landmark_offset = [&](int i) {
    return 6 * std::max(0, n_poses - 1) + 9 * i;
  };

  OptimizeReport report;
  CostTerms current = eval_cost(poses, landmarks, graph, config);
  report.initial_cost = current.total;
  report.cost_history.push_back(current.total);

  if (n_vars == 0 || config.max_iterations == 0) {
    report.final_cost = current.total;
    report.skipped_projections = current.skipped;
    report.poses = poses;
    report.landmarks = landmarks;
    return report;
  }

  Eigen::MatrixXd h(n_vars, n_vars);
  Eigen::VectorXd b(n_vars);
  const double delta_2d = config.huber_delta_2d / config.sigma_2d;
  double lambda = 1e-4;

  // One residual block: dense Jacobians against up to two variable blocks,
  // accumulated into the normal equations with the robust weight.
  const auto accumulate = [&](const Eigen::VectorXd& r, double weight,
                              double huber_delta,
                              const std::vector<std::pair<int, Eigen::MatrixXd>>&
                                  blocks) {
    const double rho = r.norm();
    const double w_rob = rho <= huber_delta ? 1.0 : huber_delta / rho;
    const double w = weight * w_rob;
    for (const auto& [off_a, jac_a] : blocks) {
      if (off_a < 0) continue;
      b.segment(off_a, jac_a.cols()) += w * jac_a.transpose() * r;
      for (const auto& [off_b, jac_b] : blocks) {
        if (off_b < 0) continue;
        h.block(off_a, off_b, jac_a.cols(), jac_b.cols()) +=
            w * jac_a.transpose() * jac_b;
      }
    }
  };

  int iterations = 0;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    iterations = iter + 1;
    h.setZero();
    b.setZero();

    for (const auto& f : graph.odometry) {
      const auto eval = [&](const Pose& a, const Pose& c) {
        return residual_odometry(a, f.u, c, config.sigma_odom);
      };
      const Vector6d r = eval(poses[f.pose_j], poses[f.pose_j + 1]);
      std::vector<std::pair<int, Eigen::MatrixXd>> blocks;
      for (int side = 0; side < 2; ++side) {
        const int j = f.pose_j + side;
        if (pose_offset(j) < 0) continue;
        Eigen::MatrixXd jac(6, 6);
        for (int k = 0; k < 6; ++k) {
          const Pose pp = perturb_pose(poses[j], k, kJacStep);
          const Pose pm = perturb_pose(poses[j], k, -kJacStep);
          const Vector6d rp = side == 0 ? eval(pp, poses[f.pose_j + 1])
                                        : eval(poses[f.pose_j], pp);
          const Vector6d rm = side == 0 ? eval(pm, poses[f.pose_j + 1])
                                        : eval(poses[f.pose_j], pm);
          jac.col(k) = (rp - rm) / (2 * kJacStep);
        }
        blocks.emplace_back(pose_offset(j), std::move(jac));
      }
      accumulate(r, 1.0, config.huber_delta_odom, blocks);
    }

    if (config.mode != Mode::TwoDOnly) {
      for (const auto& f : graph.factors_3d) {
        const auto eval = [&](const Pose& x, const EllipsoidState& lm) {
          return residual_3d(x, f.ellipsoid_c, f.p_e, lm, config.sigma_3d);
        };
        const Vector9d r = eval(poses[f.pose_id], landmarks[f.landmark_id]);
        std::vector<std::pair<int, Eigen::MatrixXd>> blocks;
        if (pose_offset(f.pose_id) >= 0) {
          Eigen::MatrixXd jac(9, 6);
          for (int k = 0; k < 6; ++k) {
            const Vector9d rp = eval(perturb_pose(poses[f.pose_id], k, kJacStep),
                                     landmarks[f.landmark_id]);
            const Vector9d rm = eval(perturb_pose(poses[f.pose_id], k, -kJacStep),
                                     landmarks[f.landmark_id]);
            jac.col(k) = (rp - rm) / (2 * kJacStep);
          }
          blocks.emplace_back(pose_offset(f.pose_id), std::move(jac));
        }
        {
          Eigen::MatrixXd jac(9, 9);
          for (int k = 0; k < 9; ++k) {
            const Vector9d rp = eval(
                poses[f.pose_id], perturb_landmark(landmarks[f.landmark_id], k, kJacStep));
            const Vector9d rm = eval(
                poses[f.pose_id], perturb_landmark(landmarks[f.landmark_id], k, -kJacStep));
            jac.col(k) = (rp - rm) / (2 * kJacStep);
          }
          blocks.emplace_back(landmark_offset(f.landmark_id), std::move(jac));
        }
        accumulate(r, config.epsilon_z, config.huber_delta_3d, blocks);
      }
    }

    if (config.mode != Mode::DepthOnly) {
      for (const auto& f : graph.factors_2d) {
        const auto eval = [&](const Pose& x, const EllipsoidState& lm) {
          return residual_2d(x, f.bbox, f.p_det, lm, graph.camera,
                             config.sigma_2d);
        };
        try {
          const Eigen::Vector4d r =
              eval(poses[f.pose_id], landmarks[f.landmark_id]);
          std::vector<std::pair<int, Eigen::MatrixXd>> blocks;
          if (pose_offset(f.pose_id) >= 0) {
            Eigen::MatrixXd jac(4, 6);
            for (int k = 0; k < 6; ++k) {
              const Eigen::Vector4d rp =
                  eval(perturb_pose(poses[f.pose_id], k, kJacStep),
                       landmarks[f.landmark_id]);
              const Eigen::Vector4d rm =
                  eval(perturb_pose(poses[f.pose_id], k, -kJacStep),
                       landmarks[f.landmark_id]);
              jac.col(k) = (rp - rm) / (2 * kJacStep);
            }
            blocks.emplace_back(pose_offset(f.pose_id), std::move(jac));
          }
          {
            Eigen::MatrixXd jac(4, 9);
            for (int k = 0; k < 9; ++k) {
              const Eigen::Vector4d rp =
                  eval(poses[f.pose_id],
                       perturb_landmark(landmarks[f.landmark_id], k, kJacStep));
              const Eigen::Vector4d rm =
                  eval(poses[f.pose_id],
                       perturb_landmark(landmarks[f.landmark_id], k, -kJacStep));
              jac.col(k) = (rp - rm) / (2 * kJacStep);
            }
            blocks.emplace_back(landmark_offset(f.landmark_id), std::move(jac));
          }
          accumulate(r, 1.0, delta_2d, blocks);
        } catch (const ProjectionFailed&) {
          continue;  // skipped this iteration; counted at the final state
        }
      }
    }

    bool accepted = false;
    double improvement = 0.0;
    for (int attempt = 0; attempt < 24; ++attempt) {
      Eigen::MatrixXd damped = h;
      for (int k = 0; k < n_vars; ++k) {
        damped(k, k) += lambda * std::max(h(k, k), 1e-10);
      }
      const Eigen::VectorXd delta = damped.ldlt().solve(-b);
      if (!delta.allFinite()) {
        lambda *= 10;
        continue;
      }

      std::vector<Pose> cand_poses = poses;
      std::vector<EllipsoidState> cand_landmarks = landmarks;
      for (int j = 1; j < n_poses; ++j) {
        apply_pose_delta(cand_poses[j], delta.segment<6>(pose_offset(j)));
      }
      for (int i = 0; i < n_landmarks; ++i) {
        apply_landmark_delta(cand_landmarks[i],
                             delta.segment<9>(landmark_offset(i)));
      }

      const CostTerms cand = eval_cost(cand_poses, cand_landmarks, graph, config);
      if (cand.total < current.total && std::isfinite(cand.total)) {
        improvement =
            (current.total - cand.total) / std::max(current.total, 1e-300);
        poses = std::move(cand_poses);
        landmarks = std::move(cand_landmarks);
        current = cand;
        report.cost_history.push_back(current.total);
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10;
      if (lambda > 1e14) break;
    }

    if (!accepted || improvement < 1e-9) break;
  }

  graph.poses = poses;
  graph.landmarks = landmarks;

  report.final_cost = current.total;
  report.iterations = iterations;
  report.skipped_projections = current.skipped;
  report.poses = std::move(poses);
  report.landmarks = std::move(landmarks);
  return report;
}

FactorGraph build_graph(const std::vector<Pose>& odometry_poses,
                        const std::vector<Detection>& detections,
                        const std::vector<Observation>& observations,
                        const Camera& cam, const GraphConfig& config,
                        BuildInfo* info) {
  FactorGraph graph;
  graph.camera = cam;
  graph.poses = odometry_poses;
  const int n_frames = int(odometry_poses.size());

  for (const auto& d : detections) {
    if (d.frame_id < 0 || d.frame_id >= n_frames) {
      throw std::runtime_error("detection references unknown frame " +
                               std::to_string(d.frame_id));
    }
  }
  for (const auto& o : observations) {
    if (o.frame_id < 0 || o.frame_id >= n_frames) {
      throw std::runtime_error("observation references unknown frame " +
                               std::to_string(o.frame_id));
    }
  }

  for (int j = 0; j + 1 < n_frames; ++j) {
    graph.odometry.push_back(
        OdometryFactor{j, odometry_poses[j].inverse() * odometry_poses[j + 1]});
  }

  // Landmark initialization. DwB / DepthOnly: single-frame, from the first
  // decomposable 3D observation. TwoDOnly: accumulate detections until the
  // multi-view tangency initialization yields an ellipsoid.
  std::vector<int> object_ids;
  for (const auto& d : detections) {
    if (std::find(object_ids.begin(), object_ids.end(), d.object_id) ==
        object_ids.end()) {
      object_ids.push_back(d.object_id);
    }
  }
  for (const auto& o : observations) {
    if (std::find(object_ids.begin(), object_ids.end(), o.object_id) ==
        object_ids.end()) {
      object_ids.push_back(o.object_id);
    }
  }
  std::sort(object_ids.begin(), object_ids.end());

  for (int oid : object_ids) {
    std::optional<EllipsoidState> init;
    std::string failure = "no observations";
    if (config.mode == Mode::TwoDOnly) {
      std::vector<BBox> boxes;
      std::vector<Pose> views;
      for (const auto& d : detections) {
        if (d.object_id != oid) continue;
        boxes.push_back(d.bbox);
        views.push_back(odometry_poses[d.frame_id]);
        if (boxes.size() < 3) continue;
        try {
          init = initialize_landmark_2d(boxes, views, cam);
          break;
        } catch (const NotAnEllipsoid& e) {
          failure = e.what();
        }
      }
      if (!init && boxes.size() < 3) failure = "fewer than 3 views";
    } else {
      for (const auto& o : observations) {
        if (o.object_id != oid) continue;
        try {
          init = initialize_landmark_3d(o.ellipsoid_c,
                                        odometry_poses[o.frame_id]);
          break;
        } catch (const NotAnEllipsoid& e) {
          failure = e.what();
        }
      }
    }
    if (init) {
      graph.landmarks.push_back(*init);
      graph.landmark_object_ids.push_back(oid);
    } else if (info) {
      info->init_failures[oid] = failure;
    }
  }

  for (const auto& d : detections) {
    const int idx = graph.landmark_index(d.object_id);
    if (idx < 0) continue;
    graph.factors_2d.push_back(Factor2D{d.frame_id, idx, d.bbox, d.p_det});
  }
  for (const auto& o : observations) {
    const int idx = graph.landmark_index(o.object_id);
    if (idx < 0) continue;
    graph.factors_3d.push_back(Factor3D{o.frame_id, idx, o.ellipsoid_c, o.p_e});
  }
  return graph;
}

}  // namespace qslam
