#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "qslam/io.hpp"
#include "test_support.hpp"

using namespace qslam;
using namespace qslam::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("qslam_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p);
  out << contents;
}

}  // namespace

TEST_CASE("trajectory parsing and roundtrip") {
  TempDir dir;
  const fs::path p = dir.path / "traj.txt";

  write_file(p, "# comment\n0.0 2.0 0.0 1.0 0.0 0.0 0.0 1.0\n");
  auto traj = load_trajectory(p);
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].first == 0.0);
  CHECK((traj[0].second.t - Eigen::Vector3d(2, 0, 1)).norm() < 1e-12);
  CHECK(traj[0].second.q.angularDistance(Eigen::Quaterniond::Identity()) < 1e-12);

  write_file(p, "# only comments\n# another\n");
  CHECK(load_trajectory(p).empty());

  write_file(p, "0.0 2.0 0.0 1.0 0.0 0.0 1.0\n");
  CHECK_THROWS_AS(load_trajectory(p), ParseError);

  write_file(p, "0.0 2.0 0.0 1.0 0.5 0.5 0.5 0.6\n");
  CHECK_THROWS_AS(load_trajectory(p), NonUnitQuaternion);

  Rng rng(3);
  std::vector<std::pair<double, Pose>> orig;
  for (int i = 0; i < 10; ++i) orig.emplace_back(i * 0.1, random_pose(rng));
  save_trajectory(p, orig);
  const auto back = load_trajectory(p);
  REQUIRE(back.size() == orig.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK((back[i].second.t - orig[i].second.t).norm() < 1e-8);
    CHECK(back[i].second.q.angularDistance(orig[i].second.q) < 1e-8);
  }
}

TEST_CASE("detections parsing") {
  TempDir dir;
  const fs::path p = dir.path / "det.txt";

  write_file(p, "12 3 tv 100.5 200.0 300.5 400.0 0.97\n");
  const auto dets = load_detections(p);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].frame_id == 12);
  CHECK(dets[0].object_id == 3);
  CHECK(dets[0].label == "tv");
  CHECK(dets[0].bbox.x_min == doctest::Approx(100.5));
  CHECK(dets[0].p_det == doctest::Approx(0.97));

  write_file(p, "12 3 tv 300.5 200.0 100.5 400.0 0.97\n");
  CHECK_THROWS_AS(load_detections(p), InvalidBBox);

  write_file(p, "12 3 tv 100.5 200.0 300.5 400.0 1.2\n");
  CHECK_THROWS_AS(load_detections(p), ParseError);
}

TEST_CASE("depth PGM formats") {
  TempDir dir;
  const fs::path p = dir.path / "d.pgm";

  write_file(p, "P2\n2 2\n65535\n5000 5000\n5000 5000\n");
  const DepthImage d = load_depth(p);
  CHECK(d.width == 2);
  CHECK(d.height == 2);
  for (int i = 0; i < 4; ++i) {
    CHECK(d.samples[i] == 5000);  // one meter at the default scale
  }

  write_file(p, "P6\n2 2\n255\nxxxxxxxxxxxx");
  CHECK_THROWS_AS(load_depth(p), UnsupportedFormat);

  write_file(p, "P2\n2 2\n65535\n5000 5000 5000\n");
  CHECK_THROWS_AS(load_depth(p), TruncatedFile);

  // Binary roundtrip, including comment handling.
  DepthImage img;
  img.width = 3;
  img.height = 2;
  img.samples = {0, 1, 500, 5000, 40000, 65535};
  save_depth(p, img);
  const DepthImage back = load_depth(p);
  REQUIRE(back.samples.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(back.samples[i] == img.samples[i]);

  std::ofstream trunc(p, std::ios::binary);
  trunc << "P5\n2 2\n65535\n\x01\x02\x03";
  trunc.close();
  CHECK_THROWS_AS(load_depth(p), TruncatedFile);
}

TEST_CASE("objects parsing and roundtrip") {
  TempDir dir;
  const fs::path p = dir.path / "obj.txt";

  write_file(p, "0 tv 1.0 2.0 0.5 0 0 1.5707963 0.6 0.05 0.4\n");
  const auto objs = load_objects(p);
  REQUIRE(objs.size() == 1);
  CHECK(objs[0].object_id == 0);
  CHECK(objs[0].label == "tv");
  CHECK(objs[0].state.rpy.z() == doctest::Approx(1.5707963));
  CHECK(objs[0].state.s.y() == doctest::Approx(0.05));

  write_file(p, "0 tv 1.0 2.0 0.5 0 0 1.5707963 0.6 0.0 0.4\n");
  CHECK_THROWS_AS(load_objects(p), NonPositiveAxis);

  Rng rng(9);
  std::vector<SceneObject> orig;
  for (int i = 0; i < 8; ++i) {
    SceneObject o;
    o.object_id = i;
    o.label = "cup";
    o.state = random_ellipsoid(rng);
    orig.push_back(o);
  }
  save_objects(p, orig);
  const auto back = load_objects(p);
  REQUIRE(back.size() == orig.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK((back[i].state.vector() - orig[i].state.vector()).norm() < 1e-8);
  }
}

TEST_CASE("observations roundtrip") {
  TempDir dir;
  const fs::path p = dir.path / "obs.txt";
  Rng rng(13);
  std::vector<Observation> orig;
  for (int i = 0; i < 6; ++i) {
    Observation o;
    o.frame_id = i;
    o.object_id = i % 3;
    o.bbox = {10.0 + i, 20.0, 100.0, 120.0};
    o.p_det = 0.9 + 0.01 * i;
    o.ellipsoid_c = random_ellipsoid(rng);
    o.p_e = 1.3e-4 * (i + 1);
    orig.push_back(o);
  }
  save_observations(p, orig);
  const auto back = load_observations(p);
  REQUIRE(back.size() == orig.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(back[i].frame_id == orig[i].frame_id);
    CHECK((back[i].ellipsoid_c.vector() - orig[i].ellipsoid_c.vector()).norm() <
          1e-8);
    CHECK(back[i].p_e == doctest::Approx(orig[i].p_e).epsilon(1e-8));
  }
}

TEST_CASE("cloud files carry the support plane") {
  TempDir dir;
  const fs::path p = dir.path / "cloud.txt";
  Rng rng(17);
  PointCloud cloud;
  for (int i = 0; i < 20; ++i) cloud.push_back(rng.normal_vec3(0.5));
  const Plane support(Eigen::Vector3d(0, -0.6, 0.8).normalized(), 0.37);
  save_cloud(p, support, cloud);
  const CloudFile back = load_cloud(p);
  CHECK((back.support.n - support.n).norm() < 1e-8);
  CHECK(back.support.d == doctest::Approx(support.d).epsilon(1e-8));
  REQUIRE(back.cloud.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.cloud[i] - cloud[i]).norm() < 1e-8);
  }

  write_file(p, "0.1 0.2 0.3\n");
  CHECK_THROWS_AS(load_cloud(p), ParseError);
}

TEST_CASE("camera file roundtrip") {
  TempDir dir;
  const fs::path p = dir.path / "camera.txt";
  const Camera cam{260.5, 261.25, 160.0, 120.0, 320, 240};
  save_camera(p, cam);
  const Camera back = load_camera(p);
  CHECK(back.fx == doctest::Approx(cam.fx));
  CHECK(back.fy == doctest::Approx(cam.fy));
  CHECK(back.width == 320);
  CHECK(back.height == 240);
}

TEST_CASE("config keys validate and echo round-trips") {
  Config cfg;
  cfg.set("seg.eps2", "0.07");
  CHECK(cfg.seg.eps2 == doctest::Approx(0.07));
  cfg.set("graph.mode", "do");
  CHECK(cfg.graph.mode == Mode::DepthOnly);
  cfg.set("symmetry.label.mug", "dual");
  CHECK(cfg.symmetry_table.lookup("mug") == SymmetryKind::DualPlaneReflection);

  CHECK_THROWS_AS(cfg.set("segg.eps2", "0.07"), ParseError);
  CHECK_THROWS_AS(cfg.set("seg.eps2", "fast"), ParseError);
  CHECK_THROWS_AS(cfg.set("graph.mode", "both"), ParseError);

  // Echo contains every key; reloading the echo reproduces it verbatim.
  std::ostringstream echo1;
  cfg.echo(echo1);
  TempDir dir;
  const fs::path p = dir.path / "config.cfg";
  write_file(p, echo1.str());
  Config cfg2;
  cfg2.load_file(p);
  std::ostringstream echo2;
  cfg2.echo(echo2);
  CHECK(echo1.str() == echo2.str());
  CHECK(echo1.str().find("seg.eps0_deg") != std::string::npos);
  CHECK(echo1.str().find("graph.epsilon_z") != std::string::npos);
  CHECK(echo1.str().find("symmetry.label.mug = dual") != std::string::npos);

  write_file(p, "seg.eps2 0.07\n");
  Config cfg3;
  CHECK_THROWS_AS(cfg3.load_file(p), ParseError);
}

TEST_CASE("dataset invariants") {
  TempDir dir;
  save_camera(dir.path / "camera.txt", Camera{260, 260, 160, 120, 320, 240});
  std::vector<std::pair<double, Pose>> traj = {{0.0, Pose{}}, {1.0, Pose{}}};
  save_trajectory(dir.path / "odometry.txt", traj);

  write_file(dir.path / "detections.txt",
             "0 1 tv 10 10 50 50 0.9\n1 1 tv 12 12 52 52 0.9\n");
  const Dataset ok = load_dataset(dir.path);
  CHECK(ok.detections.size() == 2);
  CHECK(!ok.has_depth);
  CHECK(!ok.has_clouds);

  write_file(dir.path / "detections.txt",
             "0 1 tv 10 10 50 50 0.9\n5 1 tv 12 12 52 52 0.9\n");
  CHECK_THROWS_AS(load_dataset(dir.path), ParseError);

  write_file(dir.path / "detections.txt",
             "0 1 tv 10 10 50 50 0.9\n0 1 tv 12 12 52 52 0.9\n");
  CHECK_THROWS_AS(load_dataset(dir.path), ParseError);
}
