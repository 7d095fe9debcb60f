#pragma once

#include <map>
#include <string>
#include <vector>

#include "qslam/geometry.hpp"
#include "qslam/point_cloud.hpp"

namespace qslam {

struct DegenerateCloud : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class SymmetryKind { PlaneReflection, DualPlaneReflection };

/// Label -> symmetry kind lookup. Unknown labels fall back to a single
/// reflection plane; a low score then down-weights the completion.
class SymmetryTable {
 public:
  static SymmetryTable defaults();

  void set(const std::string& label, SymmetryKind kind) { table_[label] = kind; }
  SymmetryKind lookup(const std::string& label) const;
  const std::map<std::string, SymmetryKind>& entries() const { return table_; }

 private:
  std::map<std::string, SymmetryKind> table_;
};

struct SymmetryParams {
  double sigma_sym = 0.02;       // score length scale (m)
  double angle_search_deg = 15;  // +/- rotation range
  double offset_search = 0.05;   // +/- normal offset range (m)
  int grid_steps = 11;
};

struct SymmetryResult {
  std::vector<Plane> planes;  // 1 or 2, perpendicular to the support plane
  double p_sym = 0;
  PointCloud completed;
};

SymmetryKind symmetry_prior(const std::string& label);
SymmetryKind symmetry_prior(const std::string& label, const SymmetryTable& table);

/// Initial plane: normal along the first in-support-plane principal
/// direction, through the cloud centroid.
Plane init_symmetry_plane(const PointCloud& cloud, const Plane& support);

/// exp(-(mean squared nearest-neighbor distance of the mirrored cloud) /
/// (2 sigma^2)); 1 for an exactly mirror-symmetric cloud.
double symmetry_score(const PointCloud& cloud, const Plane& plane,
                      const SymmetryParams& params);
double symmetry_score(const PointCloud& cloud, const KdTree3& tree,
                      const Plane& plane, const SymmetryParams& params);

/// Grid search around the initial plane over in-plane rotation and normal
/// offset. Dual reflection adds a perpendicular plane through the same
/// vertical axis; p_sym is then the geometric mean of the two scores.
/// The result carries planes and p_sym only.
SymmetryResult refine_symmetry(const PointCloud& cloud, const Plane& support,
                               const Plane& init, SymmetryKind kind,
                               const SymmetryParams& params);

Eigen::Vector3d mirror_point(const Eigen::Vector3d& p, const Plane& plane);
PointCloud mirror_cloud(const PointCloud& cloud, const Plane& plane);

/// Union of the cloud with its reflections (both single mirrors and the
/// composed one for two planes), deduplicated at 1e-6.
PointCloud complete_cloud(const PointCloud& cloud,
                          const std::vector<Plane>& planes);

/// prior -> init -> refine -> complete, for one segmented object.
SymmetryResult estimate_symmetry(const PointCloud& cloud, const Plane& support,
                                 const std::string& label,
                                 const SymmetryParams& params,
                                 const SymmetryTable& table);

}  // namespace qslam
