#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "qslam/geometry.hpp"
#include "test_support.hpp"

using namespace qslam;
using namespace qslam::testing;

namespace {

Camera test_camera() { return Camera{500, 500, 320, 240, 640, 480}; }

}  // namespace

TEST_CASE("ellipsoid_to_dual identity and axis-aligned cases") {
  EllipsoidState sphere;
  CHECK(ellipsoid_to_dual(sphere).m.isApprox(
      Eigen::Vector4d(1, 1, 1, -1).asDiagonal().toDenseMatrix(), 1e-12));

  EllipsoidState e;
  e.s = {1, 2, 3};
  CHECK(ellipsoid_to_dual(e).m.isApprox(
      Eigen::Vector4d(1, 4, 9, -1).asDiagonal().toDenseMatrix(), 1e-12));
}

TEST_CASE("ellipsoid_to_dual translated unit sphere") {
  EllipsoidState e;
  e.t = {1, 0, 0};
  Eigen::Matrix4d expected;
  expected << 0, 0, 0, -1,
              0, 1, 0, 0,
              0, 0, 1, 0,
              -1, 0, 0, -1;
  CHECK(ellipsoid_to_dual(e).m.isApprox(expected, 1e-12));
}

TEST_CASE("decompose_dual axis-aligned") {
  DualQuadric q;
  q.m = Eigen::Vector4d(1, 4, 9, -1).asDiagonal();
  const EllipsoidState e = decompose_dual(q);
  CHECK(e.t.norm() == doctest::Approx(0).epsilon(1e-12));
  CHECK(e.s.x() == doctest::Approx(3));
  CHECK(e.s.y() == doctest::Approx(2));
  CHECK(e.s.z() == doctest::Approx(1));
  // Axes permuted to match: rotation maps local x to world z etc.
  const Eigen::Matrix3d r = e.rotation();
  CHECK(std::abs(r.col(0).dot(Eigen::Vector3d::UnitZ())) ==
        doctest::Approx(1).epsilon(1e-9));
  CHECK(std::abs(r.col(2).dot(Eigen::Vector3d::UnitX())) ==
        doctest::Approx(1).epsilon(1e-9));
  CHECK(r.determinant() == doctest::Approx(1).epsilon(1e-9));
}

TEST_CASE("decompose_dual rejects wrong signature") {
  DualQuadric q;
  q.m = Eigen::Matrix4d::Identity();
  CHECK_THROWS_AS(decompose_dual(q), NotAnEllipsoid);
}

TEST_CASE("roundtrip over 1000 random states") {
  Rng rng(42);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const EllipsoidState e = random_ellipsoid(rng);
    const EllipsoidState back = decompose_dual(ellipsoid_to_dual(e));
    // Compare via the dual matrices: canonical axis reordering makes the
    // raw 9-vectors incomparable.
    const Eigen::Matrix4d qa = ellipsoid_to_dual(e).m;
    const Eigen::Matrix4d qb = ellipsoid_to_dual(back).m;
    worst = std::max(worst, (qa - qb).cwiseAbs().maxCoeff());
    // And the canonical form is a fixed point.
    const EllipsoidState twice = decompose_dual(ellipsoid_to_dual(back));
    CHECK((twice.t - back.t).norm() < 1e-9);
    CHECK((twice.s - back.s).norm() < 1e-9);
    for (int k = 0; k < 3; ++k) {
      CHECK(angles_equivalent(twice.rpy[k], back.rpy[k], 1e-7));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("dual_from_primal sphere and axis-aligned") {
  const Eigen::Matrix4d sphere = Eigen::Vector4d(1, 1, 1, -1).asDiagonal();
  const DualQuadric dual = dual_from_primal(sphere);
  CHECK((dual.m / dual.m(0, 0)).isApprox(sphere, 1e-9));

  // Primal of semi-axes (2,1,3) has diagonal (1/4, 1, 1/9, -1); its dual is
  // proportional to (4, 1, 9, -1).
  const Eigen::Matrix4d primal =
      Eigen::Vector4d(0.25, 1, 1.0 / 9.0, -1).asDiagonal();
  const DualQuadric d2 = dual_from_primal(primal);
  const Eigen::Matrix4d expected = Eigen::Vector4d(4, 1, 9, -1).asDiagonal();
  CHECK((d2.m / d2.m(1, 1)).isApprox(expected, 1e-9));
  const EllipsoidState e = decompose_dual(d2);
  CHECK(e.s.x() == doctest::Approx(3));
  CHECK(e.s.y() == doctest::Approx(2));
  CHECK(e.s.z() == doctest::Approx(1));
}

TEST_CASE("dual_from_primal rejects rank-deficient input") {
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(0, 0) = 1;
  q(1, 1) = 1;
  CHECK_THROWS_AS(dual_from_primal(q), Singular);
}

TEST_CASE("project_dual sphere silhouette closed form") {
  // Unit sphere 5 m ahead: half-width f * r / sqrt(d^2 - r^2) = 500/sqrt(24).
  EllipsoidState sphere;
  sphere.t = {0, 0, 5};
  const Camera cam = test_camera();
  const DualConic c = project_dual(ellipsoid_to_dual(sphere), Pose{}, cam);
  const BBox box = conic_bbox(c);
  const double half = 500.0 / std::sqrt(24.0);
  CHECK(box.x_min == doctest::Approx(320 - half).epsilon(1e-9));
  CHECK(box.x_max == doctest::Approx(320 + half).epsilon(1e-9));
  CHECK(box.y_min == doctest::Approx(240 - half).epsilon(1e-9));
  CHECK(box.y_max == doctest::Approx(240 + half).epsilon(1e-9));
  CHECK(box.x_min == doctest::Approx(217.94).epsilon(1e-4));
  CHECK(box.y_max == doctest::Approx(342.06).epsilon(1e-4));

  // Cross-check against the dense sampling oracle.
  const BBox sampled = sampled_projection_bbox(sphere, Pose{}, cam);
  CHECK(std::abs(box.x_min - sampled.x_min) < 0.5);
  CHECK(std::abs(box.x_max - sampled.x_max) < 0.5);
  CHECK(std::abs(box.y_min - sampled.y_min) < 0.5);
  CHECK(std::abs(box.y_max - sampled.y_max) < 0.5);
}

TEST_CASE("projection composes with pose transforms") {
  Rng rng(7);
  const Camera cam = test_camera();
  for (int trial = 0; trial < 20; ++trial) {
    EllipsoidState e = random_ellipsoid(rng);
    e.t = {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(4, 6)};
    Pose motion = random_pose(rng, 0.4);
    // Projecting the transformed quadric with identity pose equals
    // projecting the original from the inverse-moved camera.
    const DualQuadric q = ellipsoid_to_dual(e);
    const DualQuadric q_moved = transform_dual(q, motion);
    try {
      const BBox a = conic_bbox(project_dual(q_moved, Pose{}, cam));
      const BBox b = conic_bbox(project_dual(q, motion.inverse(), cam));
      CHECK(a.x_min == doctest::Approx(b.x_min).epsilon(1e-7));
      CHECK(a.y_max == doctest::Approx(b.y_max).epsilon(1e-7));
    } catch (const BehindCamera&) {
      continue;
    } catch (const Unbounded&) {
      continue;
    }
  }
}

TEST_CASE("project_dual rejects objects behind the camera") {
  EllipsoidState e;
  e.t = {0, 0, -1};
  CHECK_THROWS_AS(project_dual(ellipsoid_to_dual(e), Pose{}, test_camera()),
                  BehindCamera);
}

TEST_CASE("conic_bbox unit circle and degenerate cases") {
  DualConic c;
  c.m = Eigen::Vector3d(1, 1, -1).asDiagonal();
  const BBox box = conic_bbox(c);
  CHECK(box.x_min == doctest::Approx(-1));
  CHECK(box.y_min == doctest::Approx(-1));
  CHECK(box.x_max == doctest::Approx(1));
  CHECK(box.y_max == doctest::Approx(1));

  DualConic degenerate;
  degenerate.m = Eigen::Vector3d(1, 1, 0).asDiagonal();
  CHECK_THROWS_AS(conic_bbox(degenerate), Unbounded);
}

TEST_CASE("projection consistency against the sampling oracle") {
  Rng rng(2024);
  const Camera cam = test_camera();
  int checked = 0;
  while (checked < 100) {
    EllipsoidState e = random_ellipsoid(rng);
    e.t = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(3, 7)};
    BBox box;
    try {
      box = conic_bbox(project_dual(ellipsoid_to_dual(e), Pose{}, cam));
    } catch (const BehindCamera&) {
      continue;
    } catch (const Unbounded&) {
      continue;
    }
    const BBox oracle = sampled_projection_bbox(e, Pose{}, cam);
    CHECK(std::abs(box.x_min - oracle.x_min) < 0.5);
    CHECK(std::abs(box.x_max - oracle.x_max) < 0.5);
    CHECK(std::abs(box.y_min - oracle.y_min) < 0.5);
    CHECK(std::abs(box.y_max - oracle.y_max) < 0.5);
    ++checked;
  }
}

TEST_CASE("scale invariance of conic_bbox and decompose_dual") {
  Rng rng(5);
  const EllipsoidState e = random_ellipsoid(rng);
  const DualQuadric q = ellipsoid_to_dual(e);
  const Camera cam = test_camera();

  EllipsoidState near_cam = e;
  near_cam.t = {0.2, -0.1, 5};
  const DualQuadric qn = ellipsoid_to_dual(near_cam);
  const BBox base = conic_bbox(project_dual(qn, Pose{}, cam));
  const EllipsoidState decomposed = decompose_dual(q);

  for (const double scale : {1e6, -1e6, 1e-6, -1e-6}) {
    DualQuadric scaled;
    scaled.m = scale * q.m;
    const EllipsoidState d2 = decompose_dual(scaled);
    CHECK((d2.t - decomposed.t).norm() < 1e-9);
    CHECK((d2.s - decomposed.s).norm() < 1e-9);

    DualConic conic_scaled;
    conic_scaled.m = scale * project_dual(qn, Pose{}, cam).m;
    const BBox b = conic_bbox(conic_scaled);
    CHECK(b.x_min == doctest::Approx(base.x_min).epsilon(1e-9));
    CHECK(b.y_max == doctest::Approx(base.y_max).epsilon(1e-9));
  }
}

TEST_CASE("transform_dual identity, yaw swap, and center covariance") {
  DualQuadric q;
  q.m = Eigen::Vector4d(1, 4, 9, -1).asDiagonal();
  CHECK(transform_dual(q, Pose{}).m.isApprox(q.m, 1e-12));

  Pose yaw90;
  yaw90.q = Eigen::Quaterniond(
      Eigen::AngleAxisd(kPi / 2, Eigen::Vector3d::UnitZ()));
  const Eigen::Matrix4d expected = Eigen::Vector4d(4, 1, 9, -1).asDiagonal();
  CHECK(transform_dual(q, yaw90).m.isApprox(expected, 1e-9));

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const EllipsoidState e = random_ellipsoid(rng);
    const Pose h = random_pose(rng);
    const EllipsoidState moved =
        decompose_dual(transform_dual(ellipsoid_to_dual(e), h));
    CHECK((moved.t - h.apply(e.t)).norm() < 1e-9);
  }
}

TEST_CASE("transform composition") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const EllipsoidState e = random_ellipsoid(rng);
    const Pose h1 = random_pose(rng);
    const Pose h2 = random_pose(rng);
    const DualQuadric q = ellipsoid_to_dual(e);
    const Eigen::Matrix4d a = transform_dual(transform_dual(q, h1), h2).m;
    const Eigen::Matrix4d b = transform_dual(q, h2 * h1).m;
    CHECK((a - b).cwiseAbs().maxCoeff() <
          1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("point_plane_distance signs") {
  const Plane floor(Eigen::Vector3d::UnitZ(), 0.0);
  CHECK(point_plane_distance({0, 0, 1}, floor) == doctest::Approx(1));
  CHECK(point_plane_distance({3, -2, 0}, floor) == doctest::Approx(0));
  CHECK(point_plane_distance({0, 0, -0.5}, floor) == doctest::Approx(-0.5));
}

TEST_CASE("pose algebra and se3 maps") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose p = random_pose(rng);
    const Pose q = random_pose(rng);
    const Pose id = p.inverse() * p;
    CHECK(id.t.norm() < 1e-9);
    CHECK(std::abs(id.q.w()) > 1.0 - 1e-9);

    // exp/log roundtrip.
    const Vector6d xi = se3_log(q);
    const Pose back = se3_exp(xi);
    CHECK((back.t - q.t).norm() < 1e-8);
    CHECK(back.q.angularDistance(q.q) < 1e-8);

    // Composition associativity through matrices.
    const Pose r = random_pose(rng);
    CHECK(((p * q) * r).matrix().isApprox((p * (q * r)).matrix(), 1e-9));
  }
}

TEST_CASE("euler conversion roundtrip") {
  Rng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Vector3d rpy(rng.uniform(-kPi, kPi), rng.uniform(-1.5, 1.5),
                              rng.uniform(-kPi, kPi));
    const Eigen::Vector3d back = matrix_to_rpy(rpy_to_matrix(rpy));
    CHECK(rpy_to_matrix(back).isApprox(rpy_to_matrix(rpy), 1e-9));
  }
}
