#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qslam/geometry.hpp"
#include "qslam/point_cloud.hpp"
#include "qslam/random.hpp"

namespace qslam {

struct EmptyRegion : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NoSupportingPlane : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 16-bit depth frame; zero samples are invalid.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> samples;
  double depth_scale = 5000.0;  // counts per meter, TUM convention

  uint16_t at(int u, int v) const { return samples[size_t(v) * width + u]; }
  uint16_t& at(int u, int v) { return samples[size_t(v) * width + u]; }
};

/// One object detection in one frame.
struct Detection {
  int frame_id = 0;
  int object_id = 0;
  std::string label;
  BBox bbox;
  double p_det = 0;
};

struct SegmentationParams {
  double eps0_deg = 10.0;          // max normal-to-gravity angle
  int eps1 = 200;                  // min plane inliers
  double eps2 = 0.05;              // min height above plane (m)
  int eps3 = 100;                  // min cluster size
  int ransac_iters = 200;
  double ransac_inlier_dist = 0.01;
  double cluster_tolerance = 0.05;
  Eigen::Vector3d gravity = {0.0, -1.0, 0.0};  // unit, camera frame
};

/// Detection bbox plus the envelope cloud above its supporting plane.
struct SegmentedObject {
  BBox bbox;
  std::string label;
  double p_det = 0;
  PointCloud cloud;
  Plane support_plane;
};

struct PlaneHypothesis {
  Plane plane;
  int inliers = 0;
};

/// Pinhole inverse projection of the valid depths in a pixel region.
PointCloud backproject(const DepthImage& depth, const Camera& cam,
                       const BBox& region);
PointCloud backproject(const DepthImage& depth, const Camera& cam);

/// Sequential RANSAC: extract planes until none reaches eps1 inliers.
/// Normals are oriented against gravity.
std::vector<PlaneHypothesis> extract_planes(const PointCloud& cloud,
                                            const SegmentationParams& params,
                                            Rng& rng);

/// Keeps near-horizontal planes with enough support.
std::vector<PlaneHypothesis> filter_support_planes(
    const std::vector<PlaneHypothesis>& planes,
    const SegmentationParams& params);

/// Nearest plane below the object center (positive signed distance).
Plane select_supporting_plane(const std::vector<PlaneHypothesis>& candidates,
                              const Eigen::Vector3d& cloud_center);

PointCloud filter_above_plane(const PointCloud& cloud, const Plane& plane,
                              double eps2);

/// Connected components under the given distance tolerance.
std::vector<PointCloud> euclidean_cluster(const PointCloud& cloud,
                                          double tolerance);

/// Cluster nearest to the anchor, if it is large enough.
std::optional<PointCloud> select_cluster(const std::vector<PointCloud>& clusters,
                                         const Eigen::Vector3d& anchor,
                                         int eps3);

/// Full single-detection pipeline. Absent result means the object is
/// skipped for this frame.
std::optional<SegmentedObject> segment_object(const DepthImage& depth,
                                              const Camera& cam,
                                              const Detection& detection,
                                              const SegmentationParams& params,
                                              Rng& rng);

/// Variant with planes precomputed once per frame.
std::optional<SegmentedObject> segment_object(
    const DepthImage& depth, const Camera& cam, const Detection& detection,
    const std::vector<PlaneHypothesis>& support_candidates,
    const SegmentationParams& params);

}  // namespace qslam
