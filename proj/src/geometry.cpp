#include "qslam/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <array>
#include <cmath>

namespace qslam {

Eigen::Matrix3d EllipsoidState::rotation() const { return rpy_to_matrix(rpy); }

Eigen::Matrix3d rpy_to_matrix(const Eigen::Vector3d& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
      .toRotationMatrix();
}

Eigen::Vector3d matrix_to_rpy(const Eigen::Matrix3d& r) {
  // R = Rz(yaw) Ry(pitch) Rx(roll); pitch = asin(-R(2,0)).
  const double sp = -r(2, 0);
  if (std::abs(sp) > 1.0 - 1e-12) {
    // Gimbal lock: roll set to zero, yaw absorbs the remainder.
    const double pitch = std::copysign(kPi / 2.0, sp);
    const double yaw = std::atan2(-r(0, 1), r(1, 1));
    return {0.0, pitch, yaw};
  }
  const double pitch = std::asin(sp);
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {roll, pitch, yaw};
}

double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Left Jacobian of SO(3); translation block of the SE(3) exponential.
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  const Eigen::Matrix3d w = skew(omega);
  if (theta < 1e-8) {
    return Eigen::Matrix3d::Identity() + 0.5 * w + w * w / 6.0;
  }
  const double t2 = theta * theta;
  return Eigen::Matrix3d::Identity() + (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

}  // namespace

Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(omega);
  }
  return Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
}

Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

Pose se3_exp(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d omega = xi.tail<3>();
  Pose p;
  p.q = Eigen::Quaterniond(rotation_exp(omega));
  p.t = so3_left_jacobian(omega) * rho;
  return p;
}

Vector6d se3_log(const Pose& p) {
  const Eigen::Vector3d omega = rotation_log(p.rotation());
  Vector6d xi;
  xi.tail<3>() = omega;
  xi.head<3>() = so3_left_jacobian(omega).inverse() * p.t;
  return xi;
}

Eigen::Matrix<double, 6, 6> se3_adjoint(const Pose& p) {
  const Eigen::Matrix3d r = p.rotation();
  Eigen::Matrix<double, 6, 6> ad = Eigen::Matrix<double, 6, 6>::Zero();
  ad.topLeftCorner<3, 3>() = r;
  ad.bottomRightCorner<3, 3>() = r;
  ad.topRightCorner<3, 3>() = skew(p.t) * r;
  return ad;
}

DualQuadric ellipsoid_to_dual(const EllipsoidState& e) {
  Eigen::Matrix4d z = Eigen::Matrix4d::Identity();
  z.topLeftCorner<3, 3>() = e.rotation();
  z.topRightCorner<3, 1>() = e.t;
  Eigen::Vector4d diag(e.s.x() * e.s.x(), e.s.y() * e.s.y(), e.s.z() * e.s.z(),
                       -1.0);
  DualQuadric q;
  q.m = z * diag.asDiagonal() * z.transpose();
  return q;
}

EllipsoidState decompose_dual(const DualQuadric& q) {
  // Scale so the largest entry is 1, then fix the overall sign from the
  // eigenvalue signature: an ellipsoid dual has exactly one negative
  // eigenvalue.
  Eigen::Matrix4d m = 0.5 * (q.m + q.m.transpose());
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0) || !std::isfinite(scale)) {
    throw NotAnEllipsoid("zero or non-finite quadric");
  }
  m /= scale;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es4(m);
  const Eigen::Vector4d ev = es4.eigenvalues();
  const double ev_tol = 1e-10 * ev.cwiseAbs().maxCoeff();
  int n_pos = 0, n_neg = 0;
  for (int i = 0; i < 4; ++i) {
    if (ev[i] > ev_tol) ++n_pos;
    if (ev[i] < -ev_tol) ++n_neg;
  }
  if (n_pos == 1 && n_neg == 3) {
    m = -m;
    std::swap(n_pos, n_neg);
  }
  if (n_pos != 3 || n_neg != 1) {
    throw NotAnEllipsoid("eigenvalue signature is not (+,+,+,-)");
  }

  // With signature fixed, m = k * Z diag(s^2, -1) Z^T for some k > 0, hence
  // m(3,3) = -k. Normalize so the centered form has -1 in the corner.
  if (!(m(3, 3) < 0)) {
    throw NotAnEllipsoid("degenerate corner entry");
  }
  m /= -m(3, 3);

  const Eigen::Vector3d t = -m.topRightCorner<3, 1>();
  const Eigen::Matrix3d e33 = m.topLeftCorner<3, 3>() + t * t.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(e33);
  Eigen::Vector3d lam = es.eigenvalues();
  Eigen::Matrix3d vec = es.eigenvectors();
  if (!(lam.minCoeff() > 0)) {
    throw NotAnEllipsoid("centered form is not positive definite");
  }

  // Canonical order: semi-axes descending (solver returns ascending).
  lam.reverseInPlace();
  vec = vec.rowwise().reverse().eval();
  if (vec.determinant() < 0) vec.col(2) = -vec.col(2);

  // Column signs are free in pairs; pick the proper rotation closest to
  // identity (max trace).
  static const std::array<Eigen::Vector3d, 4> flips = {
      Eigen::Vector3d(1, 1, 1), Eigen::Vector3d(1, -1, -1),
      Eigen::Vector3d(-1, 1, -1), Eigen::Vector3d(-1, -1, 1)};
  Eigen::Matrix3d best = vec;
  double best_trace = vec.trace();
  for (const auto& f : flips) {
    const Eigen::Matrix3d cand = vec * f.asDiagonal();
    if (cand.trace() > best_trace) {
      best_trace = cand.trace();
      best = cand;
    }
  }

  EllipsoidState e;
  e.t = t;
  e.rpy = matrix_to_rpy(best);
  e.s = lam.cwiseSqrt();
  return e;
}

DualQuadric dual_from_primal(const Eigen::Matrix4d& q_primal) {
  const double scale = q_primal.cwiseAbs().maxCoeff();
  if (!(scale > 0)) throw Singular("zero matrix");
  const Eigen::Matrix4d qn = q_primal / scale;
  const double det = qn.determinant();
  if (std::abs(det) < 1e-12) throw Singular("determinant below tolerance");
  DualQuadric q;
  q.m = det * qn.inverse();
  return q;
}

Eigen::Vector3d quadric_center(const DualQuadric& q) {
  if (std::abs(q.m(3, 3)) < 1e-15 * q.m.cwiseAbs().maxCoeff()) {
    throw NotAnEllipsoid("quadric has no finite center");
  }
  return q.m.topRightCorner<3, 1>() / q.m(3, 3);
}

DualConic project_dual(const DualQuadric& q, const Pose& camera_in_world,
                       const Camera& cam) {
  const Pose wc = camera_in_world.inverse();
  const Eigen::Vector3d center_c = wc.apply(quadric_center(q));
  if (center_c.z() <= 0) {
    throw BehindCamera("quadric center behind the camera");
  }
  Eigen::Matrix<double, 3, 4> p =
      cam.k_matrix() * wc.matrix().topRows<3>();
  DualConic c;
  c.m = p * q.m * p.transpose();
  return c;
}

BBox conic_bbox(const DualConic& c) {
  // Tangent lines (1,0,-x) and (0,1,-y): quadratics in x and y whose roots
  // are the rectangle sides.
  Eigen::Matrix3d m = 0.5 * (c.m + c.m.transpose());
  const double scale = m.cwiseAbs().maxCoeff();
  if (!(scale > 0)) throw Unbounded("zero conic");
  m /= scale;

  const double c22 = m(2, 2);
  if (std::abs(c22) < 1e-14) throw Unbounded("no finite tangent rectangle");

  const double disc_x = m(0, 2) * m(0, 2) - m(0, 0) * c22;
  const double disc_y = m(1, 2) * m(1, 2) - m(1, 1) * c22;
  if (disc_x <= 0 || disc_y <= 0) {
    throw Unbounded("conic is not a real ellipse");
  }

  const double rx = std::sqrt(disc_x) / std::abs(c22);
  const double ry = std::sqrt(disc_y) / std::abs(c22);
  const double x0 = m(0, 2) / c22;
  const double y0 = m(1, 2) / c22;

  BBox b;
  b.x_min = x0 - rx;
  b.x_max = x0 + rx;
  b.y_min = y0 - ry;
  b.y_max = y0 + ry;
  return b;
}

DualQuadric transform_dual(const DualQuadric& q_c, const Pose& h_wc) {
  const Eigen::Matrix4d h = h_wc.matrix();
  DualQuadric q;
  q.m = h * q_c.m * h.transpose();
  return q;
}

Plane transform_plane(const Plane& plane, const Pose& h) {
  const Eigen::Vector3d n = h.q * plane.n;
  return Plane(n, plane.d - n.dot(h.t));
}

Eigen::Matrix4d primal_from_ellipsoid(const EllipsoidState& e) {
  Eigen::Matrix4d z = Eigen::Matrix4d::Identity();
  z.topLeftCorner<3, 3>() = e.rotation();
  z.topRightCorner<3, 1>() = e.t;
  const Eigen::Matrix4d zinv = z.inverse();
  Eigen::Vector4d diag(1.0 / (e.s.x() * e.s.x()), 1.0 / (e.s.y() * e.s.y()),
                       1.0 / (e.s.z() * e.s.z()), -1.0);
  return zinv.transpose() * diag.asDiagonal() * zinv;
}

}  // namespace qslam
