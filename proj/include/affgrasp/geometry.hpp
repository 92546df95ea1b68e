#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace affgrasp::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Ordered 3D points with optional per-point binary affordance labels.
struct PointCloud {
  std::vector<Vec3> points;
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool has_labels() const noexcept { return labels.has_value(); }

  /// Throws InvalidArgument on non-finite coordinates or a label/point length mismatch.
  void validate() const;
};

/// Maps object coordinates into voxel coordinates: q = scale * p + translation.
struct NormalizationTransform {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
  Vec3 invert(const Vec3& q) const { return (q - translation) / scale; }
};

/// Dense R^3 grid of values in [0,1]; index = (z * R + y) * R + x.
struct VoxelGrid {
  int resolution = 32;
  std::vector<double> values;
  NormalizationTransform frame;

  VoxelGrid() = default;
  VoxelGrid(int resolution, NormalizationTransform frame);

  std::size_t index(int x, int y, int z) const noexcept {
    return (static_cast<std::size_t>(z) * resolution + y) * resolution + x;
  }
  double at(int x, int y, int z) const { return values[index(x, y, z)]; }
  std::size_t occupied_count(double threshold = 0.5) const;
};

class RigidTransform {
 public:
  RigidTransform() = default;
  /// Throws InvalidArgument unless rotation is orthonormal with det = +1 (tolerance 1e-9).
  RigidTransform(const Mat3& rotation, const Vec3& translation);

  static RigidTransform identity() { return {}; }
  static RigidTransform rotation_z(double angle, const Vec3& translation = Vec3::Zero());
  /// ZYX convention: R = Rz(yaw) * Ry(pitch) * Rx(roll).
  static RigidTransform from_rpy(double roll, double pitch, double yaw,
                                 const Vec3& translation = Vec3::Zero());

  const Mat3& rotation() const noexcept { return rotation_; }
  const Vec3& translation() const noexcept { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 apply_direction(const Vec3& d) const { return rotation_ * d; }
  RigidTransform inverse() const;
  /// (this * other).apply(p) == this->apply(other.apply(p))
  RigidTransform operator*(const RigidTransform& other) const;

  PointCloud apply(const PointCloud& cloud) const;

 private:
  Mat3 rotation_ = Mat3::Identity();
  Vec3 translation_ = Vec3::Zero();
};

/// Plane {p : normal . p = offset}; positive side is "above the table".
class TablePlane {
 public:
  TablePlane() = default;
  /// Normal must have unit length within 1e-9.
  TablePlane(const Vec3& normal, double offset);

  static TablePlane horizontal(double z) { return TablePlane(Vec3::UnitZ(), z); }

  const Vec3& normal() const noexcept { return normal_; }
  double offset() const noexcept { return offset_; }
  double signed_distance(const Vec3& p) const { return normal_.dot(p) - offset_; }
  TablePlane transformed(const RigidTransform& t) const;

 private:
  Vec3 normal_ = Vec3::UnitZ();
  double offset_ = 0.0;
};

/// Centers the bounding box at R/2 and scales the longest extent to R - 2 (one voxel of
/// padding per side), so every point lands in [1, R-1].
struct NormalizedCloud {
  PointCloud cloud;
  NormalizationTransform transform;
};
NormalizedCloud normalize_cloud(const PointCloud& cloud, int resolution = 32);

/// Occupancy of a cloud already expressed in voxel coordinates.
VoxelGrid voxelize(const PointCloud& normalized, int resolution = 32,
                   const NormalizationTransform& frame = {});

/// Object-space cloud is mapped through grid.frame; a point landing outside the grid
/// raises FrameMismatch.
std::vector<std::uint8_t> voxel_mask_to_point_labels(const PointCloud& cloud, const VoxelGrid& grid,
                                                     double threshold = 0.5);

struct PcaAxis {
  Vec3 axis;
  Vec3 eigenvalues;  // descending
  bool tie = false;
};
PcaAxis pca_main_axis(std::span<const Vec3> points);

/// Symmetric 3x3 eigen-decomposition by cyclic Jacobi rotations; eigenvalues descending,
/// eigenvectors in the matching columns.
void symmetric_eigen3(const Mat3& a, Vec3& eigenvalues, Mat3& eigenvectors);

std::vector<Vec3> fibonacci_sphere(int n, const Vec3& center = Vec3::Zero(), double radius = 1.0);

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b);

struct Aabb {
  Vec3 lo;
  Vec3 hi;
  Vec3 extent() const { return hi - lo; }
  Vec3 center() const { return 0.5 * (lo + hi); }
};
Aabb bounding_box(std::span<const Vec3> points);
Vec3 centroid(std::span<const Vec3> points);
/// Largest distance from the centroid.
double bounding_sphere_radius(std::span<const Vec3> points);

}  // namespace affgrasp::geom
