#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <stdexcept>

namespace qslam {

inline constexpr double kPi = 3.14159265358979323846;

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;

struct NotAnEllipsoid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Singular : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BehindCamera : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Unbounded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rigid transform, stored as translation plus unit quaternion.
struct Pose {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();

  static Pose Identity() { return {}; }

  Eigen::Matrix3d rotation() const { return q.toRotationMatrix(); }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation();
    m.topRightCorner<3, 1>() = t;
    return m;
  }

  Pose inverse() const {
    Pose p;
    p.q = q.conjugate();
    p.t = -(p.q * t);
    return p;
  }

  Pose operator*(const Pose& rhs) const {
    Pose p;
    p.q = (q * rhs.q).normalized();
    p.t = t + q * rhs.t;
    return p;
  }

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return q * x + t; }

  void normalize() { q.normalize(); }
};

/// Pinhole intrinsics.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  Eigen::Matrix3d k_matrix() const {
    Eigen::Matrix3d k;
    k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
    return k;
  }
};

/// Axis-aligned pixel rectangle (x_min, y_min, x_max, y_max).
struct BBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  Eigen::Vector2d center() const {
    return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)};
  }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  Eigen::Vector4d vector() const { return {x_min, y_min, x_max, y_max}; }
};

/// Plane n.p + d = 0 with unit normal.
struct Plane {
  Eigen::Vector3d n = Eigen::Vector3d::UnitZ();
  double d = 0;

  Plane() = default;
  Plane(const Eigen::Vector3d& normal, double offset) : n(normal), d(offset) {}

  Plane normalized() const {
    const double s = n.norm();
    return Plane(n / s, d / s);
  }
};

inline double point_plane_distance(const Eigen::Vector3d& p, const Plane& plane) {
  return plane.n.dot(p) + plane.d;
}

/// 9-DOF ellipsoid: center, intrinsic Z-Y-X Euler angles, semi-axes.
struct EllipsoidState {
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  Eigen::Vector3d rpy = Eigen::Vector3d::Zero();
  Eigen::Vector3d s = Eigen::Vector3d::Ones();

  Eigen::Matrix3d rotation() const;
  Vector9d vector() const {
    Vector9d v;
    v << t, rpy, s;
    return v;
  }
};

/// Dual quadric Q*, a homogeneous symmetric 4x4 matrix.
struct DualQuadric {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
};

/// Dual conic C*, a homogeneous symmetric 3x3 matrix.
struct DualConic {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
};

// Euler angles, intrinsic Z-Y-X: R = Rz(yaw) Ry(pitch) Rx(roll).
Eigen::Matrix3d rpy_to_matrix(const Eigen::Vector3d& rpy);
Eigen::Vector3d matrix_to_rpy(const Eigen::Matrix3d& r);

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// SO(3)/SE(3) exponential and logarithm. se(3) vectors are [rho, omega].
Eigen::Matrix3d rotation_exp(const Eigen::Vector3d& omega);
Eigen::Vector3d rotation_log(const Eigen::Matrix3d& r);
Pose se3_exp(const Vector6d& xi);
Vector6d se3_log(const Pose& p);
Eigen::Matrix<double, 6, 6> se3_adjoint(const Pose& p);

DualQuadric ellipsoid_to_dual(const EllipsoidState& e);
EllipsoidState decompose_dual(const DualQuadric& q);
DualQuadric dual_from_primal(const Eigen::Matrix4d& q_primal);
DualConic project_dual(const DualQuadric& q, const Pose& camera_in_world,
                       const Camera& cam);
BBox conic_bbox(const DualConic& c);
DualQuadric transform_dual(const DualQuadric& q_c, const Pose& h_wc);

/// Center of a dual quadric (no ellipsoid check).
Eigen::Vector3d quadric_center(const DualQuadric& q);

/// Plane carrying the points {h(x) : x on plane}.
Plane transform_plane(const Plane& plane, const Pose& h);

/// Primal matrix of an ellipsoid, normalized to F(center) = -1.
Eigen::Matrix4d primal_from_ellipsoid(const EllipsoidState& e);

}  // namespace qslam
