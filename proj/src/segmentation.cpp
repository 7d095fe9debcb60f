#include "qslam/segmentation.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

namespace qslam {

namespace {

constexpr int kMaxPlaneRounds = 32;
constexpr size_t kMaxScorePoints = 20000;

Eigen::Vector3d pixel_point(const DepthImage& depth, const Camera& cam, int u,
                            int v) {
  const double z = depth.at(u, v) / depth.depth_scale;
  return {z * (u - cam.cx) / cam.fx, z * (v - cam.cy) / cam.fy, z};
}

std::optional<Plane> plane_from_triple(const Eigen::Vector3d& a,
                                       const Eigen::Vector3d& b,
                                       const Eigen::Vector3d& c) {
  const Eigen::Vector3d n = (b - a).cross(c - a);
  const double norm = n.norm();
  if (norm < 1e-12) return std::nullopt;
  const Eigen::Vector3d nn = n / norm;
  return Plane(nn, -nn.dot(a));
}

Plane refit_plane(const PointCloud& cloud, const std::vector<int>& inliers) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (int i : inliers) c += cloud[i];
  c /= double(inliers.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : inliers) {
    const Eigen::Vector3d d = cloud[i] - c;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d n = es.eigenvectors().col(0);
  return Plane(n, -n.dot(c));
}

Plane orient_against_gravity(const Plane& p, const Eigen::Vector3d& gravity) {
  if (p.n.dot(gravity) > 0) return Plane(-p.n, -p.d);
  return p;
}

}  // namespace

PointCloud backproject(const DepthImage& depth, const Camera& cam,
                       const BBox& region) {
  const int u0 = std::max(0, int(std::ceil(region.x_min)));
  const int u1 = std::min(depth.width - 1, int(std::floor(region.x_max)));
  const int v0 = std::max(0, int(std::ceil(region.y_min)));
  const int v1 = std::min(depth.height - 1, int(std::floor(region.y_max)));
  PointCloud cloud;
  cloud.reserve(size_t(std::max(0, u1 - u0 + 1)) * size_t(std::max(0, v1 - v0 + 1)));
  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      if (depth.at(u, v) == 0) continue;
      cloud.push_back(pixel_point(depth, cam, u, v));
    }
  }
  if (cloud.empty()) throw EmptyRegion("no valid depths in region");
  return cloud;
}

PointCloud backproject(const DepthImage& depth, const Camera& cam) {
  return backproject(depth, cam,
                     BBox{0, 0, double(depth.width - 1), double(depth.height - 1)});
}

std::vector<PlaneHypothesis> extract_planes(const PointCloud& cloud,
                                            const SegmentationParams& params,
                                            Rng& rng) {
  std::vector<PlaneHypothesis> result;
  std::vector<int> working(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) working[i] = int(i);

  for (int round = 0; round < kMaxPlaneRounds; ++round) {
    if (working.size() < 3) break;

    // Hypotheses are scored on a stride subset when the cloud is large;
    // the winner is re-counted exactly.
    const size_t stride = working.size() > kMaxScorePoints
                              ? (working.size() + kMaxScorePoints - 1) / kMaxScorePoints
                              : 1;
    std::optional<Plane> best;
    int best_score = -1;
    for (int it = 0; it < params.ransac_iters; ++it) {
      const int ia = working[rng.uniform_index(working.size())];
      const int ib = working[rng.uniform_index(working.size())];
      const int ic = working[rng.uniform_index(working.size())];
      if (ia == ib || ib == ic || ia == ic) continue;
      const auto plane = plane_from_triple(cloud[ia], cloud[ib], cloud[ic]);
      if (!plane) continue;
      int score = 0;
      for (size_t k = 0; k < working.size(); k += stride) {
        if (std::abs(point_plane_distance(cloud[working[k]], *plane)) <=
            params.ransac_inlier_dist) {
          ++score;
        }
      }
      if (score > best_score) {
        best_score = score;
        best = plane;
      }
    }
    if (!best) break;

    std::vector<int> inliers;
    for (int i : working) {
      if (std::abs(point_plane_distance(cloud[i], *best)) <=
          params.ransac_inlier_dist) {
        inliers.push_back(i);
      }
    }
    if (int(inliers.size()) < params.eps1 || inliers.size() < 3) break;

    Plane refined = refit_plane(cloud, inliers);
    std::vector<int> final_inliers;
    std::vector<int> remaining;
    for (int i : working) {
      if (std::abs(point_plane_distance(cloud[i], refined)) <=
          params.ransac_inlier_dist) {
        final_inliers.push_back(i);
      } else {
        remaining.push_back(i);
      }
    }
    if (int(final_inliers.size()) < params.eps1) break;

    refined = orient_against_gravity(refined, params.gravity);
    result.push_back(PlaneHypothesis{refined, int(final_inliers.size())});
    working = std::move(remaining);
  }
  return result;
}

std::vector<PlaneHypothesis> filter_support_planes(
    const std::vector<PlaneHypothesis>& planes,
    const SegmentationParams& params) {
  const Eigen::Vector3d up = -params.gravity;
  const double cos_eps0 = std::cos(params.eps0_deg * kPi / 180.0);
  std::vector<PlaneHypothesis> kept;
  for (const auto& p : planes) {
    if (p.inliers <= params.eps1) continue;
    if (p.plane.n.dot(up) < cos_eps0) continue;
    kept.push_back(p);
  }
  return kept;
}

Plane select_supporting_plane(const std::vector<PlaneHypothesis>& candidates,
                              const Eigen::Vector3d& cloud_center) {
  const Plane* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) {
    const double d = point_plane_distance(cloud_center, c.plane);
    if (d > 0 && d < best_dist) {
      best_dist = d;
      best = &c.plane;
    }
  }
  if (!best) throw NoSupportingPlane("no plane below the object center");
  return *best;
}

PointCloud filter_above_plane(const PointCloud& cloud, const Plane& plane,
                              double eps2) {
  PointCloud kept;
  kept.reserve(cloud.size());
  for (const auto& p : cloud) {
    if (point_plane_distance(p, plane) > eps2) kept.push_back(p);
  }
  return kept;
}

std::vector<PointCloud> euclidean_cluster(const PointCloud& cloud,
                                          double tolerance) {
  std::vector<PointCloud> clusters;
  if (cloud.empty()) return clusters;
  KdTree3 tree(cloud);
  std::vector<bool> visited(cloud.size(), false);
  std::vector<int> neighbors;
  for (size_t seed = 0; seed < cloud.size(); ++seed) {
    if (visited[seed]) continue;
    visited[seed] = true;
    std::deque<int> frontier{int(seed)};
    PointCloud cluster;
    while (!frontier.empty()) {
      const int i = frontier.front();
      frontier.pop_front();
      cluster.push_back(cloud[i]);
      tree.radius_search(cloud[i], tolerance, neighbors);
      for (int j : neighbors) {
        if (!visited[j]) {
          visited[j] = true;
          frontier.push_back(j);
        }
      }
    }
    clusters.push_back(std::move(cluster));
  }
  return clusters;
}

std::optional<PointCloud> select_cluster(const std::vector<PointCloud>& clusters,
                                         const Eigen::Vector3d& anchor,
                                         int eps3) {
  const PointCloud* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& cluster : clusters) {
    for (const auto& p : cluster) {
      const double d2 = (p - anchor).squaredNorm();
      if (d2 < best_dist) {
        best_dist = d2;
        best = &cluster;
      }
    }
  }
  if (!best || int(best->size()) <= eps3) return std::nullopt;
  return *best;
}

namespace {

// Anchor for cluster selection: the bbox center pixel, or the nearest valid
// pixel within 5 px when the center depth is missing.
std::optional<Eigen::Vector3d> bbox_anchor(const DepthImage& depth,
                                           const Camera& cam, const BBox& bbox) {
  const int uc = int(std::lround(0.5 * (bbox.x_min + bbox.x_max)));
  const int vc = int(std::lround(0.5 * (bbox.y_min + bbox.y_max)));
  int best_u = -1, best_v = -1;
  int best_d2 = std::numeric_limits<int>::max();
  for (int dv = -5; dv <= 5; ++dv) {
    for (int du = -5; du <= 5; ++du) {
      const int u = uc + du, v = vc + dv;
      if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
      if (depth.at(u, v) == 0) continue;
      const int d2 = du * du + dv * dv;
      if (d2 < best_d2) {
        best_d2 = d2;
        best_u = u;
        best_v = v;
      }
    }
  }
  if (best_u < 0 || best_d2 > 25) return std::nullopt;
  return pixel_point(depth, cam, best_u, best_v);
}

}  // namespace

std::optional<SegmentedObject> segment_object(
    const DepthImage& depth, const Camera& cam, const Detection& detection,
    const std::vector<PlaneHypothesis>& support_candidates,
    const SegmentationParams& params) {
  if (support_candidates.empty()) return std::nullopt;

  PointCloud region_cloud;
  try {
    region_cloud = backproject(depth, cam, detection.bbox);
  } catch (const EmptyRegion&) {
    return std::nullopt;
  }

  Plane support;
  try {
    support = select_supporting_plane(support_candidates, centroid(region_cloud));
  } catch (const NoSupportingPlane&) {
    return std::nullopt;
  }

  const PointCloud above = filter_above_plane(region_cloud, support, params.eps2);
  if (above.empty()) return std::nullopt;

  const auto anchor = bbox_anchor(depth, cam, detection.bbox);
  if (!anchor) return std::nullopt;

  const auto clusters = euclidean_cluster(above, params.cluster_tolerance);
  auto cloud = select_cluster(clusters, *anchor, params.eps3);
  if (!cloud) return std::nullopt;

  SegmentedObject obj;
  obj.bbox = detection.bbox;
  obj.label = detection.label;
  obj.p_det = detection.p_det;
  obj.cloud = std::move(*cloud);
  obj.support_plane = support;
  return obj;
}

std::optional<SegmentedObject> segment_object(const DepthImage& depth,
                                              const Camera& cam,
                                              const Detection& detection,
                                              const SegmentationParams& params,
                                              Rng& rng) {
  PointCloud full;
  try {
    full = backproject(depth, cam);
  } catch (const EmptyRegion&) {
    return std::nullopt;
  }
  const auto planes = extract_planes(full, params, rng);
  const auto candidates = filter_support_planes(planes, params);
  return segment_object(depth, cam, detection, candidates, params);
}

}  // namespace qslam
