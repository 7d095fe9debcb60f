#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qslam/fitting.hpp"
#include "qslam/sim.hpp"
#include "test_support.hpp"

using namespace qslam;
using namespace qslam::testing;

namespace {

const Plane kFloor(Eigen::Vector3d::UnitZ(), 0.0);

Eigen::Vector3d sorted_desc(Eigen::Vector3d v) {
  std::sort(v.data(), v.data() + 3, std::greater<double>());
  return v;
}

double line_angle_deg(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::clamp(std::abs(a.normalized().dot(b.normalized())),
                              0.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

}  // namespace

TEST_CASE("algebraic_distance on the unit sphere") {
  EllipsoidState sphere;
  CHECK(algebraic_distance({1, 0, 0}, sphere) == doctest::Approx(0).epsilon(1e-12));
  CHECK(algebraic_distance({0, 0, 0}, sphere) == doctest::Approx(-1));
  CHECK(algebraic_distance({2, 0, 0}, sphere) == doctest::Approx(3));
}

TEST_CASE("fit_cost is zero on the surface and matches direct evaluation") {
  EllipsoidState e;
  e.t = {0.3, -0.2, 0.5};
  e.rpy = {0.2, -0.1, 0.7};
  e.s = {0.4, 0.25, 0.15};
  CHECK(fit_cost(sample_surface(e, 500), e) < 1e-18);
  CHECK(fit_cost(PointCloud{}, e) == 0.0);

  // Interior points, cost recomputed from the closed form.
  Rng rng(5);
  PointCloud interior;
  for (int i = 0; i < 50; ++i) {
    const Eigen::Vector3d u = rng.normal_vec3(1.0).normalized() *
                              std::cbrt(rng.uniform(0.0, 1.0)) * 0.9;
    interior.push_back(e.t + e.rotation() * e.s.cwiseProduct(u).eval());
  }
  double manual = 0;
  const double w = std::sqrt(e.s.prod());
  for (const auto& p : interior) {
    const double f = algebraic_distance(p, e);
    manual += (w * f) * (w * f);
  }
  CHECK(fit_cost(interior, e) == doctest::Approx(manual).epsilon(1e-12));

  // Volume regularization: inflating all axes strictly increases the cost.
  for (int trial = 0; trial < 10; ++trial) {
    EllipsoidState big = e;
    big.s *= 2.0;
    CHECK(fit_cost(interior, big) > fit_cost(interior, e));
  }
}

TEST_CASE("fit_ellipsoid recovers noiseless full-surface parameters") {
  EllipsoidState truth;
  truth.t = {1, 2, 0.3};
  truth.rpy = {0, 0, 30.0 * kPi / 180.0};
  truth.s = {0.5, 0.3, 0.2};
  const PointCloud cloud = sample_surface(truth, 2000);

  const Plane support(Eigen::Vector3d::UnitZ(), -0.1);
  const FitResult fit = fit_ellipsoid(cloud, support, std::nullopt, FitParams{});

  CHECK((fit.ellipsoid.t - truth.t).norm() < 1e-3);
  const Eigen::Vector3d se = sorted_desc(fit.ellipsoid.s);
  const Eigen::Vector3d st = sorted_desc(truth.s);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(se[k] - st[k]) / st[k] < 0.01);
  }
  // Yaw mod axis symmetry: the long axis lines coincide.
  CHECK(line_angle_deg(fit.ellipsoid.rotation().col(0),
                       truth.rotation().col(0)) < 1.0);

  // The solver cannot beat the global optimum on noiseless data...
  CHECK(fit_cost(cloud, truth) <= fit_cost(cloud, fit.ellipsoid) + 1e-9);
  // ...and always improves on its initialization (monotone descent).
  CHECK(fit.converged);
  CHECK(fit.ellipsoid.s.minCoeff() > 0);
}

TEST_CASE("fit_ellipsoid under 5 mm noise, 20-seed median") {
  EllipsoidState truth;
  truth.t = {0.4, -0.3, 0.25};
  truth.rpy = {0, 0, -0.6};
  truth.s = {0.35, 0.22, 0.18};

  std::vector<double> center_err, axis_rel;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    PointCloud cloud = sample_surface(truth, 1500);
    for (auto& p : cloud) p += rng.normal_vec3(0.005);
    const FitResult fit =
        fit_ellipsoid(cloud, kFloor, std::nullopt, FitParams{});
    center_err.push_back((fit.ellipsoid.t - truth.t).norm());
    const Eigen::Vector3d se = sorted_desc(fit.ellipsoid.s);
    const Eigen::Vector3d st = sorted_desc(truth.s);
    double worst = 0;
    for (int k = 0; k < 3; ++k) {
      worst = std::max(worst, std::abs(se[k] - st[k]) / st[k]);
    }
    axis_rel.push_back(worst);
  }
  std::sort(center_err.begin(), center_err.end());
  std::sort(axis_rel.begin(), axis_rel.end());
  CHECK(center_err[10] < 0.01);
  CHECK(axis_rel[10] < 0.05);
}

TEST_CASE("fit_ellipsoid rejects tiny clouds") {
  PointCloud ten(10, Eigen::Vector3d(0.1, 0.2, 0.3));
  CHECK_THROWS_AS(fit_ellipsoid(ten, kFloor, std::nullopt, FitParams{}),
                  TooFewPoints);
}

TEST_CASE("fit_probability formula") {
  CHECK(fit_probability(0) == doctest::Approx(0.398942).epsilon(1e-5));
  CHECK(fit_probability(2) ==
        doctest::Approx(0.398942 * std::exp(-1.0)).epsilon(1e-5));
  CHECK(fit_probability(2) == doctest::Approx(0.146763).epsilon(1e-4));
  CHECK(fit_probability(1e6) == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("combine_probability is a plain product") {
  CHECK(combine_probability(0.9, 0.8, 0.3) == doctest::Approx(0.216));
  CHECK(combine_probability(0.0, 0.8, 0.3) == 0.0);
  CHECK(combine_probability(1, 1, 0.398942) == doctest::Approx(0.398942));

  // Monotonicity in each factor.
  CHECK(combine_probability(0.95, 0.8, 0.3) > combine_probability(0.9, 0.8, 0.3));
  CHECK(combine_probability(0.9, 0.9, 0.3) > combine_probability(0.9, 0.8, 0.3));
}

TEST_CASE("estimate_single_frame on a rendered frame") {
  Scene scene;
  scene.support = Plane(Eigen::Vector3d::UnitZ(), 0);
  SceneObject obj;
  obj.object_id = 4;
  obj.label = "chair";
  obj.state.t = {0, 0, 0.42};
  obj.state.rpy = {0, 0, 0.3};
  obj.state.s = {0.30, 0.17, 0.24};
  scene.objects.push_back(obj);

  // Camera near the object's minor axis, a little elevated.
  const Camera cam{260, 260, 160, 120, 320, 240};
  const Eigen::Vector3d minor = obj.state.rotation().col(1);
  const Eigen::Vector3d eye =
      obj.state.t - 2.0 * minor + Eigen::Vector3d(0, 0, 0.9);
  const Eigen::Vector3d z = (obj.state.t - eye).normalized();
  const Eigen::Vector3d x = z.cross(Eigen::Vector3d::UnitZ()).normalized();
  Eigen::Matrix3d r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  Pose pose;
  pose.t = eye;
  pose.q = Eigen::Quaterniond(r);

  NoiseSpec noise;
  noise.depth_sigma = 0.002;
  Rng render_rng(55);
  const DepthImage depth = render_depth(scene, pose, cam, noise, render_rng);

  const BBox bbox =
      conic_bbox(project_dual(ellipsoid_to_dual(obj.state), pose, cam));
  Detection det;
  det.frame_id = 3;
  det.object_id = 4;
  det.label = "chair";
  det.bbox = bbox;
  det.p_det = 0.97;

  // Second detection over empty floor.
  Detection floor_det = det;
  floor_det.object_id = 5;
  floor_det.label = "cup";
  floor_det.bbox = BBox{15, 190, 70, 230};

  SegmentationParams seg;
  seg.gravity = pose.rotation().transpose() * Eigen::Vector3d(0, 0, -1);

  Rng rng(9);
  std::vector<std::string> diag;
  const auto obs = estimate_single_frame(depth, cam, {det, floor_det}, seg,
                                         SymmetryParams{}, FitParams{},
                                         SymmetryTable::defaults(), rng, &diag);
  REQUIRE(obs.size() == 1);
  CHECK(obs[0].frame_id == 3);
  CHECK(obs[0].object_id == 4);
  CHECK(obs[0].p_det == doctest::Approx(0.97));
  CHECK(obs[0].p_e > 0);
  CHECK(obs[0].p_e <= 0.398943);
  CHECK(!diag.empty());  // the floor detection was logged

  // Camera-frame estimate matches the ground truth object.
  const EllipsoidState world =
      decompose_dual(transform_dual(ellipsoid_to_dual(obs[0].ellipsoid_c), pose));
  CHECK((world.t - obj.state.t).norm() < 0.01);
  const Eigen::Vector3d se = sorted_desc(world.s);
  const Eigen::Vector3d st = sorted_desc(obj.state.s);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(se[k] - st[k]) / st[k] < 0.05);
  }

  // Empty frame: no detections in, nothing out.
  const auto none = estimate_single_frame(depth, cam, {}, seg, SymmetryParams{},
                                          FitParams{}, SymmetryTable::defaults(),
                                          rng, nullptr);
  CHECK(none.empty());
}
