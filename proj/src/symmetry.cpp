#include "qslam/symmetry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace qslam {

SymmetryTable SymmetryTable::defaults() {
  SymmetryTable t;
  t.set("chair", SymmetryKind::PlaneReflection);
  t.set("laptop", SymmetryKind::PlaneReflection);
  t.set("cup", SymmetryKind::PlaneReflection);
  t.set("table", SymmetryKind::DualPlaneReflection);
  t.set("tv", SymmetryKind::DualPlaneReflection);
  t.set("keyboard", SymmetryKind::DualPlaneReflection);
  return t;
}

SymmetryKind SymmetryTable::lookup(const std::string& label) const {
  std::string key = label;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  const auto it = table_.find(key);
  return it == table_.end() ? SymmetryKind::PlaneReflection : it->second;
}

SymmetryKind symmetry_prior(const std::string& label) {
  return SymmetryTable::defaults().lookup(label);
}

SymmetryKind symmetry_prior(const std::string& label, const SymmetryTable& table) {
  return table.lookup(label);
}

namespace {

Eigen::Vector3d project_to_plane(const Eigen::Vector3d& p, const Plane& plane) {
  return p - point_plane_distance(p, plane) * plane.n;
}

Plane plane_through(const Eigen::Vector3d& normal, const Eigen::Vector3d& point) {
  return Plane(normal, -normal.dot(point));
}

// Rotates v by angle about axis (both unit).
Eigen::Vector3d rotate_about(const Eigen::Vector3d& v,
                             const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis) * v;
}

}  // namespace

Plane init_symmetry_plane(const PointCloud& cloud, const Plane& support) {
  if (cloud.size() < 3) throw DegenerateCloud("fewer than 3 points");

  const Eigen::Vector3d c = centroid(cloud);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : cloud) {
    const Eigen::Vector3d d = project_to_plane(p, support) -
                              project_to_plane(c, support);
    cov += d * d.transpose();
  }
  cov /= double(cloud.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const double spread = es.eigenvalues()(2);
  if (spread < 1e-16) throw DegenerateCloud("no in-plane spread");

  // First principal direction of the projected cloud; lies in the support
  // plane by construction, so the result is perpendicular to it.
  Eigen::Vector3d n = es.eigenvectors().col(2);
  n -= n.dot(support.n) * support.n;
  const double norm = n.norm();
  if (norm < 1e-12) throw DegenerateCloud("principal direction degenerate");
  n /= norm;
  return plane_through(n, c);
}

double symmetry_score(const PointCloud& cloud, const KdTree3& tree,
                      const Plane& plane, const SymmetryParams& params) {
  if (cloud.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : cloud) {
    sum += tree.nearest_dist2(mirror_point(p, plane));
  }
  const double mean_sq = sum / double(cloud.size());
  return std::exp(-mean_sq / (2.0 * params.sigma_sym * params.sigma_sym));
}

double symmetry_score(const PointCloud& cloud, const Plane& plane,
                      const SymmetryParams& params) {
  return symmetry_score(cloud, KdTree3(cloud), plane, params);
}

SymmetryResult refine_symmetry(const PointCloud& cloud, const Plane& support,
                               const Plane& init, SymmetryKind kind,
                               const SymmetryParams& params) {
  const KdTree3 tree(cloud);
  const Eigen::Vector3d c = centroid(cloud);
  const Eigen::Vector3d axis = support.n;
  const int steps = std::max(2, params.grid_steps);

  // In-plane component of the initial normal; candidates rotate about the
  // support normal and shift along their own normal.
  Eigen::Vector3d n0 = init.n - init.n.dot(axis) * axis;
  n0.normalize();

  // The exact init plane is scored first so the result can never be worse
  // than it.
  Plane best = init;
  double best_score = symmetry_score(cloud, tree, init, params);
  double best_angle = 0.0;
  double best_offset = -(n0.dot(c) + init.d);

  // Coarse grid over the full search window, then a fine grid spanning one
  // coarse cell around the winner.
  double angle_center = 0.0, angle_range = params.angle_search_deg * kPi / 180.0;
  double offset_center = 0.0, offset_range = params.offset_search;
  for (int pass = 0; pass < 2; ++pass) {
    for (int ia = 0; ia < steps; ++ia) {
      const double a =
          angle_center - angle_range + 2.0 * angle_range * ia / (steps - 1);
      const Eigen::Vector3d n = rotate_about(n0, axis, a);
      for (int io = 0; io < steps; ++io) {
        const double off =
            offset_center - offset_range + 2.0 * offset_range * io / (steps - 1);
        const Plane cand(n, -n.dot(c) - off);
        const double score = symmetry_score(cloud, tree, cand, params);
        if (score > best_score) {
          best_score = score;
          best = cand;
          best_angle = a;
          best_offset = off;
        }
      }
    }
    angle_center = best_angle;
    offset_center = best_offset;
    angle_range = 2.0 * angle_range / (steps - 1);
    offset_range = 2.0 * offset_range / (steps - 1);
  }

  SymmetryResult result;
  result.planes.push_back(best);
  result.p_sym = best_score;

  if (kind == SymmetryKind::DualPlaneReflection) {
    // Second plane: perpendicular to the first, through the same vertical
    // axis (the centroid projected onto the refined plane).
    const Eigen::Vector3d point_on_axis =
        c - point_plane_distance(c, best) * best.n;
    Eigen::Vector3d n2 = axis.cross(best.n);
    n2.normalize();
    const Plane second = plane_through(n2, point_on_axis);
    const double score2 = symmetry_score(cloud, tree, second, params);
    result.planes.push_back(second);
    result.p_sym = std::sqrt(best_score * score2);
  }
  return result;
}

Eigen::Vector3d mirror_point(const Eigen::Vector3d& p, const Plane& plane) {
  return p - 2.0 * point_plane_distance(p, plane) * plane.n;
}

PointCloud mirror_cloud(const PointCloud& cloud, const Plane& plane) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(mirror_point(p, plane));
  return out;
}

namespace {

void append_dedup(PointCloud& acc, const PointCloud& extra, double tol) {
  KdTree3 tree(acc);
  const double tol2 = tol * tol;
  for (const auto& p : extra) {
    if (tree.nearest_dist2(p) > tol2) acc.push_back(p);
  }
}

}  // namespace

PointCloud complete_cloud(const PointCloud& cloud,
                          const std::vector<Plane>& planes) {
  PointCloud out = cloud;
  if (planes.empty()) return out;
  constexpr double kDedupTol = 1e-6;
  append_dedup(out, mirror_cloud(cloud, planes[0]), kDedupTol);
  if (planes.size() > 1) {
    append_dedup(out, mirror_cloud(cloud, planes[1]), kDedupTol);
    append_dedup(out, mirror_cloud(mirror_cloud(cloud, planes[0]), planes[1]),
                 kDedupTol);
  }
  return out;
}

SymmetryResult estimate_symmetry(const PointCloud& cloud, const Plane& support,
                                 const std::string& label,
                                 const SymmetryParams& params,
                                 const SymmetryTable& table) {
  const SymmetryKind kind = table.lookup(label);
  const Plane init = init_symmetry_plane(cloud, support);
  SymmetryResult result = refine_symmetry(cloud, support, init, kind, params);
  result.completed = complete_cloud(cloud, result.planes);
  return result;
}

}  // namespace qslam
