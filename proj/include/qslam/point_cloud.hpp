#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <vector>

#include "qslam/geometry.hpp"

namespace qslam {

using PointCloud = std::vector<Eigen::Vector3d>;

Eigen::Vector3d centroid(const PointCloud& cloud);
Eigen::Matrix3d covariance(const PointCloud& cloud);

/// Exact 3D kd-tree over a fixed point set (median split).
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(const PointCloud& points) { build(points); }

  void build(const PointCloud& points);
  bool empty() const { return nodes_.empty(); }

  /// Squared distance to the nearest stored point.
  double nearest_dist2(const Eigen::Vector3d& query) const;

  /// Indices (into the build cloud) of points within radius of query.
  void radius_search(const Eigen::Vector3d& query, double radius,
                     std::vector<int>& out) const;

 private:
  struct Node {
    Eigen::Vector3d p;
    int index = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
  };

  int build_range(std::vector<int>& idx, int lo, int hi, int depth,
                  const PointCloud& pts);
  void nearest_impl(int node, const Eigen::Vector3d& q, double& best) const;
  void radius_impl(int node, const Eigen::Vector3d& q, double r2,
                   std::vector<int>& out) const;

  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace qslam
