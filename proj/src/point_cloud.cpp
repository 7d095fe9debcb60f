#include "qslam/point_cloud.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace qslam {

Eigen::Vector3d centroid(const PointCloud& cloud) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : cloud) c += p;
  return cloud.empty() ? c : Eigen::Vector3d(c / double(cloud.size()));
}

Eigen::Matrix3d covariance(const PointCloud& cloud) {
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  if (cloud.size() < 2) return cov;
  const Eigen::Vector3d c = centroid(cloud);
  for (const auto& p : cloud) {
    const Eigen::Vector3d d = p - c;
    cov += d * d.transpose();
  }
  return cov / double(cloud.size());
}

void KdTree3::build(const PointCloud& points) {
  nodes_.clear();
  nodes_.reserve(points.size());
  std::vector<int> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  root_ = build_range(idx, 0, int(points.size()), 0, points);
}

int KdTree3::build_range(std::vector<int>& idx, int lo, int hi, int depth,
                         const PointCloud& pts) {
  if (lo >= hi) return -1;
  const int axis = depth % 3;
  const int mid = (lo + hi) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) { return pts[a][axis] < pts[b][axis]; });
  Node node;
  node.p = pts[idx[mid]];
  node.index = idx[mid];
  node.axis = axis;
  const int self = int(nodes_.size());
  nodes_.push_back(node);
  nodes_[self].left = build_range(idx, lo, mid, depth + 1, pts);
  nodes_[self].right = build_range(idx, mid + 1, hi, depth + 1, pts);
  return self;
}

double KdTree3::nearest_dist2(const Eigen::Vector3d& query) const {
  double best = std::numeric_limits<double>::infinity();
  nearest_impl(root_, query, best);
  return best;
}

void KdTree3::nearest_impl(int node, const Eigen::Vector3d& q,
                           double& best) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  best = std::min(best, (n.p - q).squaredNorm());
  const double delta = q[n.axis] - n.p[n.axis];
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  nearest_impl(near, q, best);
  if (delta * delta < best) nearest_impl(far, q, best);
}

void KdTree3::radius_search(const Eigen::Vector3d& query, double radius,
                            std::vector<int>& out) const {
  out.clear();
  radius_impl(root_, query, radius * radius, out);
}

void KdTree3::radius_impl(int node, const Eigen::Vector3d& q, double r2,
                          std::vector<int>& out) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  if ((n.p - q).squaredNorm() <= r2) out.push_back(n.index);
  const double delta = q[n.axis] - n.p[n.axis];
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  radius_impl(near, q, r2, out);
  if (delta * delta <= r2) radius_impl(far, q, r2, out);
}

}  // namespace qslam
