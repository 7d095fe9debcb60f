#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "qslam/backend.hpp"
#include "qslam/fitting.hpp"
#include "qslam/geometry.hpp"
#include "qslam/segmentation.hpp"
#include "qslam/sim.hpp"
#include "qslam/symmetry.hpp"

namespace qslam {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidBBox : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UnsupportedFormat : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncatedFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonUnitQuaternion : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NonPositiveAxis : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Trajectories: "timestamp tx ty tz qx qy qz qw" per line, '#' comments.
// Quaternions are normalized on load, tolerating 1e-3 drift.
std::vector<std::pair<double, Pose>> load_trajectory(
    const std::filesystem::path& path);
void save_trajectory(const std::filesystem::path& path,
                     const std::vector<std::pair<double, Pose>>& trajectory);

// Detections: "frame_id object_id label x_min y_min x_max y_max p_det".
std::vector<Detection> load_detections(const std::filesystem::path& path);
void save_detections(const std::filesystem::path& path,
                     const std::vector<Detection>& detections);

// Depth: 16-bit PGM, P5 binary (big-endian) or P2 ASCII.
DepthImage load_depth(const std::filesystem::path& path, double scale = 5000.0);
void save_depth(const std::filesystem::path& path, const DepthImage& depth);

// Objects: "object_id label x y z roll pitch yaw s1 s2 s3".
std::vector<SceneObject> load_objects(const std::filesystem::path& path);
void save_objects(const std::filesystem::path& path,
                  const std::vector<SceneObject>& objects);

// Observations: detections joined with the camera-frame ellipsoid and p_e.
std::vector<Observation> load_observations(const std::filesystem::path& path);
void save_observations(const std::filesystem::path& path,
                       const std::vector<Observation>& observations);

// Envelope clouds: "plane nx ny nz d" header line, then "x y z" per point.
struct CloudFile {
  Plane support;
  PointCloud cloud;
};
CloudFile load_cloud(const std::filesystem::path& path);
void save_cloud(const std::filesystem::path& path, const Plane& support,
                const PointCloud& cloud);

// Camera intrinsics: "fx fy cx cy width height".
Camera load_camera(const std::filesystem::path& path);
void save_camera(const std::filesystem::path& path, const Camera& cam);

/// Flat key=value configuration covering every tunable parameter. Unknown
/// keys are rejected.
struct Config {
  Camera camera{260.0, 260.0, 160.0, 120.0, 320, 240};
  SegmentationParams seg;
  SymmetryParams sym;
  FitParams fit;
  GraphConfig graph;
  NoiseSpec noise;
  TrajectorySpec traj;
  EvalParams eval;
  SymmetryTable symmetry_table = SymmetryTable::defaults();
  std::string sim_emit = "clouds";  // clouds | depth

  void set(const std::string& key, const std::string& value);
  void load_file(const std::filesystem::path& path);
  void echo(std::ostream& out) const;
};

/// A dataset directory: camera, trajectories, detections, ground truth, and
/// either per-detection cloud files or rendered depth frames.
struct Dataset {
  std::filesystem::path root;
  Camera camera;
  std::vector<std::pair<double, Pose>> groundtruth;
  std::vector<std::pair<double, Pose>> odometry;
  std::vector<Detection> detections;
  std::vector<SceneObject> gt_objects;
  bool has_clouds = false;
  bool has_depth = false;

  std::vector<Pose> odometry_poses() const;
  std::filesystem::path cloud_path(int frame_id, int object_id) const;
  std::filesystem::path depth_path(int frame_id) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

// Locale-independent fixed formatting used by every writer.
std::string format_fixed(double x);   // %.9f
std::string format_sci(double x);     // %.9e

}  // namespace qslam
