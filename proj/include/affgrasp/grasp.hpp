#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affgrasp/geometry.hpp"

namespace affgrasp::grasp {

using geom::Mat3;
using geom::Vec3;

/// Parallel-jaw gripper, centimeters. Tool frame: origin at the palm face, z along the
/// approach, x along the closing direction. Fingers occupy |x| in [max_aperture/2,
/// max_aperture/2 + finger_width], |y| <= finger_width/2, z in [0, finger_length]; the palm is
/// a slab of thickness finger_width behind z = 0. The grasp point sits at z = palm_depth.
struct GripperModel {
  double finger_width = 1.8;
  double max_aperture = 4.5;
  double finger_length = 5.0;
  double palm_depth = 5.0;

  void validate() const;
};

struct ToolBox {
  Vec3 lo, hi;
};
/// Left finger, right finger, palm (tool frame).
std::array<ToolBox, 3> gripper_boxes(const GripperModel& gripper);

struct PlannerConfig {
  int sphere_samples = 256;
  double sphere_radius_factor = 1.5;
  double epsilon = 0.01;
  int max_clusters = 5;
  int kmeans_iters = 50;
  std::uint64_t seed = 0;
  /// Orientation of the approach lattice; rotating it together with the scene makes the
  /// planner's output rotate with it.
  geom::RigidTransform lattice_rotation;

  void validate() const;
};

struct ApproachPath {
  Vec3 start = Vec3::Zero();
  Vec3 grasp_point = Vec3::Zero();
  double score = 0;
  double angle = 0;  // to the main axis, folded into [0, pi/2]

  Vec3 direction() const { return (grasp_point - start).normalized(); }
};

struct Pose {
  double x = 0, y = 0, z = 0, roll = 0, pitch = 0, yaw = 0;
};

struct GraspConfiguration {
  Pose pose;
  Mat3 orientation = Mat3::Identity();  // columns: closing, y, approach
  Vec3 position = Vec3::Zero();
  ApproachPath approach;
  int cluster_id = 0;
  double roll_adjustment = 0;  // radians about the approach axis
  bool axis_fallback = false;  // approach within 2 degrees of the main axis
};

struct ClusterDiagnostics {
  int cluster_id = 0;
  std::size_t points = 0;
  std::size_t candidates = 0;
  std::size_t feasible = 0;  // after table filtering
  std::string failure;       // empty on success
};

struct GraspPlan {
  std::vector<GraspConfiguration> configurations;  // ascending score
  std::vector<ClusterDiagnostics> diagnostics;
  Vec3 main_axis = Vec3::UnitX();
  bool main_axis_tie = false;
};

// ---- clustering -----------------------------------------------------------------------

struct KMeansResult {
  std::vector<Vec3> centroids;
  std::vector<int> assignment;
  std::vector<double> inertia;  // after every assignment step
  int iterations = 0;
  bool converged = false;
};

/// Lloyd iterations from a seeded k-means++ start. Assignment ties go to the lower index; an
/// emptied cluster is re-seeded at the point farthest from its centroid.
KMeansResult kmeans(std::span<const Vec3> points, int m, int iters, std::uint64_t seed);

/// clamp(round(extent along the main axis / max_aperture), 1, max_clusters).
int choose_cluster_count(std::span<const Vec3> affordance_points, const GripperModel& gripper, int max_clusters);

// ---- candidates and scoring -----------------------------------------------------------

std::vector<ApproachPath> generate_candidates(const Vec3& grasp_point, double radius, const PlannerConfig& config);
/// Radius = sphere_radius_factor x bounding-sphere radius of the cloud.
std::vector<ApproachPath> generate_candidates(const Vec3& grasp_point, std::span<const Vec3> cloud,
                                              const PlannerConfig& config);

/// Keeps paths whose start is on or above the table. Throws NoFeasibleApproach if none are.
std::vector<ApproachPath> filter_table(std::span<const ApproachPath> paths, const geom::TablePlane& table);

double path_angle(const ApproachPath& path, const Vec3& main_axis);

/// Structure-of-arrays copy of a cloud for the vectorized scorer.
struct PackedPoints {
  std::vector<double> x, y, z;
  explicit PackedPoints(std::span<const Vec3> points);
  std::size_t size() const { return x.size(); }
};

/// 2 (pi - a) / pi * sum_i min(1, 1 / (d_i^2 + epsilon)), d_i the distance of point i to the
/// segment start -> grasp point. Lower is better.
double score_path(const ApproachPath& path, const PackedPoints& cloud, const Vec3& main_axis, double epsilon);
double score_path(const ApproachPath& path, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon);

/// Fills score and angle of every path; parallel over paths.
void score_paths(std::span<ApproachPath> paths, const PackedPoints& cloud, const Vec3& main_axis, double epsilon);

/// Strict weak order of the ranking: score, then smaller angle, then lexicographic start.
bool ranks_before(const ApproachPath& a, const ApproachPath& b);

/// Best path of each cluster (empty clusters skipped), ranked across clusters.
/// Returns (cluster id, path) pairs. Throws NoFeasibleApproach if every cluster is empty.
std::vector<std::pair<int, ApproachPath>> select_best(const std::vector<std::vector<ApproachPath>>& per_cluster);

// ---- poses ----------------------------------------------------------------------------

/// ZYX Euler angles of a rotation, choosing the branch with |roll| <= pi/2.
Pose pose_from(const Mat3& rotation, const Vec3& position);

/// True when no gripper box corner, at the final pose or swept back by finger_length along the
/// approach, lies below the table.
bool clears_table(const Mat3& orientation, const Vec3& position, const GripperModel& gripper,
                  const geom::TablePlane& table);

/// Throws TableCollision when no roll in 0, +-10, ..., +-90 degrees clears the table.
GraspConfiguration synthesize_pose(const ApproachPath& path, const Vec3& main_axis, const GripperModel& gripper,
                                   const geom::TablePlane& table, int cluster_id = 0);

/// Full pipeline on a cloud and its affordance labels. Cloud and table share one frame; the
/// resulting poses are mapped through object_to_world.
GraspPlan plan(const geom::PointCloud& cloud, std::span<const std::uint8_t> affordance_labels,
               const geom::TablePlane& table, const GripperModel& gripper, const PlannerConfig& config,
               const geom::RigidTransform& object_to_world = {});

/// One configuration per line: cluster_id, score, x, y, z, roll, pitch, yaw (tab-separated).
std::string format_plan(const GraspPlan& plan);

}  // namespace affgrasp::grasp

namespace affgrasp::grasp::reference {

/// Direct per-point loop over geom::point_segment_distance.
double score_path(const ApproachPath& path, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon);
void score_paths(std::span<ApproachPath> paths, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon);

}  // namespace affgrasp::grasp::reference
