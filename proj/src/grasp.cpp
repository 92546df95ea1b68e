#include "affgrasp/grasp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "affgrasp/error.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::grasp {

using std::numbers::pi;

void GripperModel::validate() const {
  if (!(finger_width > 0 && max_aperture > 0 && finger_length > 0 && palm_depth > 0)) {
    throw Error(ErrorCode::InvalidArgument, "gripper dimensions must be positive");
  }
  if (!(max_aperture > finger_width)) throw Error(ErrorCode::InvalidArgument, "max_aperture must exceed finger_width");
  if (!(palm_depth <= finger_length)) {
    throw Error(ErrorCode::InvalidArgument, "palm_depth must not exceed finger_length (grasp point between the fingers)");
  }
}

std::array<ToolBox, 3> gripper_boxes(const GripperModel& g) {
  const double in = g.max_aperture / 2, out = in + g.finger_width, half = g.finger_width / 2;
  return {ToolBox{Vec3(-out, -half, 0), Vec3(-in, half, g.finger_length)},
          ToolBox{Vec3(in, -half, 0), Vec3(out, half, g.finger_length)},
          ToolBox{Vec3(-out, -half, -g.finger_width), Vec3(out, half, 0)}};
}

void PlannerConfig::validate() const {
  if (sphere_samples < 8) throw Error(ErrorCode::InvalidArgument, "sphere_samples must be >= 8");
  if (!(epsilon > 0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
  if (!(sphere_radius_factor > 0)) throw Error(ErrorCode::InvalidArgument, "sphere radius factor must be positive");
  if (max_clusters < 1) throw Error(ErrorCode::InvalidArgument, "max_clusters must be >= 1");
  if (kmeans_iters < 1) throw Error(ErrorCode::InvalidArgument, "kmeans_iters must be >= 1");
}

// ---- k-means ----------------------------------------------------------------------------

namespace {

double assign(std::span<const Vec3> points, const std::vector<Vec3>& centroids, std::vector<int>& assignment) {
  double inertia = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    int best = 0;
    double best_d = (points[i] - centroids[0]).squaredNorm();
    for (int c = 1; c < static_cast<int>(centroids.size()); ++c) {
      const double d = (points[i] - centroids[c]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assignment[i] = best;
    inertia += best_d;
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(std::span<const Vec3> points, int m, int iters, std::uint64_t seed) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "k-means needs m >= 1");
  if (static_cast<std::size_t>(m) > points.size()) {
    throw Error(ErrorCode::TooManyClusters,
                std::to_string(m) + " clusters requested for " + std::to_string(points.size()) + " points");
  }
  const std::size_t n = points.size();
  Rng rng(mix_seed(seed, 0x4B));
  KMeansResult r;

  // k-means++ seeding.
  std::vector<char> taken(n, 0);
  std::size_t first = std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
  r.centroids.push_back(points[first]);
  taken[first] = 1;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (points[i] - points[first]).squaredNorm();
  while (static_cast<int>(r.centroids.size()) < m) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0) {
      double target = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0) continue;
        pick = i;
        target -= d2[i];
        if (target < 0) break;
      }
    } else {
      // Every point coincides with a chosen centroid; fall back to the first unused index.
      pick = static_cast<std::size_t>(std::find(taken.begin(), taken.end(), 0) - taken.begin());
    }
    taken[pick] = 1;
    r.centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points[i] - points[pick]).squaredNorm());
  }

  r.assignment.assign(n, -1);
  std::vector<int> previous;
  for (int it = 0; it < iters; ++it) {
    previous = r.assignment;
    r.inertia.push_back(assign(points, r.centroids, r.assignment));
    r.iterations = it + 1;
    if (r.assignment == previous) {
      r.converged = true;
      break;
    }
    std::vector<Vec3> sum(m, Vec3::Zero());
    std::vector<std::size_t> count(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[r.assignment[i]] += points[i];
      ++count[r.assignment[i]];
    }
    for (int c = 0; c < m; ++c) {
      if (count[c] > 0) {
        r.centroids[c] = sum[c] / static_cast<double>(count[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = (points[i] - r.centroids[r.assignment[i]]).squaredNorm();
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      r.centroids[c] = points[far];
    }
  }
  return r;
}

int choose_cluster_count(std::span<const Vec3> points, const GripperModel& gripper, int max_clusters) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "no affordance points");
  if (points.size() < 2) return 1;
  geom::PcaAxis pca;
  try {
    pca = geom::pca_main_axis(points);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateInput) return 1;
    throw;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& p : points) {
    const double t = p.dot(pca.axis);
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  const int m = static_cast<int>(std::lround((hi - lo) / gripper.max_aperture));
  return std::clamp(m, 1, std::min<int>(max_clusters, static_cast<int>(points.size())));
}

// ---- candidates, filtering, scoring -------------------------------------------------------

std::vector<ApproachPath> generate_candidates(const Vec3& grasp_point, double radius, const PlannerConfig& config) {
  config.validate();
  const auto unit = geom::fibonacci_sphere(config.sphere_samples);
  const Mat3& rot = config.lattice_rotation.rotation();
  std::vector<ApproachPath> out;
  out.reserve(unit.size());
  for (const auto& u : unit) {
    ApproachPath p;
    p.start = grasp_point + radius * (rot * u);
    p.grasp_point = grasp_point;
    out.push_back(p);
  }
  return out;
}

std::vector<ApproachPath> generate_candidates(const Vec3& grasp_point, std::span<const Vec3> cloud,
                                              const PlannerConfig& config) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "cannot size the approach sphere of an empty cloud");
  double radius = config.sphere_radius_factor * geom::bounding_sphere_radius(cloud);
  if (!(radius > 0)) radius = config.sphere_radius_factor;
  return generate_candidates(grasp_point, radius, config);
}

std::vector<ApproachPath> filter_table(std::span<const ApproachPath> paths, const geom::TablePlane& table) {
  std::vector<ApproachPath> out;
  for (const auto& p : paths) {
    if (table.signed_distance(p.start) >= 0) out.push_back(p);
  }
  if (out.empty()) throw Error(ErrorCode::NoFeasibleApproach, "every approach starts below the table");
  return out;
}

double path_angle(const ApproachPath& path, const Vec3& main_axis) {
  return std::acos(std::min(1.0, std::abs(path.direction().dot(main_axis))));
}

PackedPoints::PackedPoints(std::span<const Vec3> points) {
  x.reserve(points.size());
  y.reserve(points.size());
  z.reserve(points.size());
  for (const auto& p : points) {
    x.push_back(p.x());
    y.push_back(p.y());
    z.push_back(p.z());
  }
}

double score_path(const ApproachPath& path, const PackedPoints& cloud, const Vec3& main_axis, double epsilon) {
  const Vec3 u = path.start - path.grasp_point;
  const double uu = u.squaredNorm();
  if (!(uu > 0)) throw Error(ErrorCode::DegenerateSegment, "approach path has zero length");
  const double ux = u.x(), uy = u.y(), uz = u.z(), inv = 1.0 / uu;
  const double gx = path.grasp_point.x(), gy = path.grasp_point.y(), gz = path.grasp_point.z();
  const double* px = cloud.x.data();
  const double* py = cloud.y.data();
  const double* pz = cloud.z.data();
  const std::size_t n = cloud.size();
  double sum = 0;
#pragma omp simd reduction(+ : sum)
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = px[i] - gx, dy = py[i] - gy, dz = pz[i] - gz;
    const double t = std::clamp((dx * ux + dy * uy + dz * uz) * inv, 0.0, 1.0);
    const double rx = dx - t * ux, ry = dy - t * uy, rz = dz - t * uz;
    sum += std::min(1.0, 1.0 / (rx * rx + ry * ry + rz * rz + epsilon));
  }
  return 2.0 * (pi - path_angle(path, main_axis)) / pi * sum;
}

double score_path(const ApproachPath& path, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon) {
  return score_path(path, PackedPoints(cloud), main_axis, epsilon);
}

void score_paths(std::span<ApproachPath> paths, const PackedPoints& cloud, const Vec3& main_axis, double epsilon) {
  const int n = static_cast<int>(paths.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    paths[i].angle = path_angle(paths[i], main_axis);
    paths[i].score = score_path(paths[i], cloud, main_axis, epsilon);
  }
}

bool ranks_before(const ApproachPath& a, const ApproachPath& b) {
  if (a.score != b.score) return a.score < b.score;
  if (a.angle != b.angle) return a.angle < b.angle;
  return std::lexicographical_compare(a.start.data(), a.start.data() + 3, b.start.data(), b.start.data() + 3);
}

std::vector<std::pair<int, ApproachPath>> select_best(const std::vector<std::vector<ApproachPath>>& per_cluster) {
  std::vector<std::pair<int, ApproachPath>> winners;
  for (std::size_t c = 0; c < per_cluster.size(); ++c) {
    if (per_cluster[c].empty()) continue;
    winners.emplace_back(static_cast<int>(c),
                         *std::min_element(per_cluster[c].begin(), per_cluster[c].end(), ranks_before));
  }
  if (winners.empty()) throw Error(ErrorCode::NoFeasibleApproach, "no cluster has a feasible approach");
  std::stable_sort(winners.begin(), winners.end(),
                   [](const auto& a, const auto& b) { return ranks_before(a.second, b.second); });
  return winners;
}

// ---- poses -------------------------------------------------------------------------------

namespace {

double wrap(double a) {
  while (a > pi) a -= 2 * pi;
  while (a <= -pi) a += 2 * pi;
  return a;
}

}  // namespace

Pose pose_from(const Mat3& r, const Vec3& position) {
  Pose p{position.x(), position.y(), position.z(), 0, 0, 0};
  const double s = std::clamp(-r(2, 0), -1.0, 1.0);
  if (std::abs(s) > 1 - 1e-12) {
    // Gimbal lock: only yaw - roll (or yaw + roll) is determined; put it all in yaw.
    p.pitch = s > 0 ? pi / 2 : -pi / 2;
    p.roll = 0;
    p.yaw = std::atan2(-r(0, 1), r(1, 1));
    return p;
  }
  p.pitch = std::asin(s);
  p.roll = std::atan2(r(2, 1), r(2, 2));
  p.yaw = std::atan2(r(1, 0), r(0, 0));
  if (std::abs(p.roll) > pi / 2) {
    p.pitch = wrap(pi - p.pitch);
    p.roll = wrap(p.roll + pi);
    p.yaw = wrap(p.yaw + pi);
  }
  return p;
}

bool clears_table(const Mat3& orientation, const Vec3& position, const GripperModel& gripper,
                  const geom::TablePlane& table) {
  const Vec3 back = -gripper.finger_length * orientation.col(2);
  for (const auto& box : gripper_boxes(gripper)) {
    for (int corner = 0; corner < 8; ++corner) {
      const Vec3 c((corner & 1) ? box.hi.x() : box.lo.x(), (corner & 2) ? box.hi.y() : box.lo.y(),
                   (corner & 4) ? box.hi.z() : box.lo.z());
      const Vec3 w = orientation * c + position;
      if (table.signed_distance(w) < -1e-9 || table.signed_distance(w + back) < -1e-9) return false;
    }
  }
  return true;
}

GraspConfiguration synthesize_pose(const ApproachPath& path, const Vec3& main_axis, const GripperModel& gripper,
                                   const geom::TablePlane& table, int cluster_id) {
  gripper.validate();
  GraspConfiguration g;
  g.approach = path;
  g.cluster_id = cluster_id;
  const Vec3 approach = path.direction();
  Vec3 closing = approach.cross(main_axis);
  if (closing.norm() < std::sin(2.0 * pi / 180.0)) {
    g.axis_fallback = true;
    int k = 0;
    approach.cwiseAbs().minCoeff(&k);
    closing = approach.cross(Vec3::Unit(k));
  }
  closing.normalize();
  Mat3 base;
  base.col(0) = closing;
  base.col(1) = approach.cross(closing);
  base.col(2) = approach;
  g.position = path.grasp_point - gripper.palm_depth * approach;

  for (int step = 0; step <= 18; ++step) {
    const int k = (step + 1) / 2;
    const double delta = k == 0 ? 0.0 : (step % 2 == 1 ? 1 : -1) * k * 10.0 * pi / 180.0;
    const Mat3 rot = base * Eigen::AngleAxisd(delta, Vec3::UnitZ()).toRotationMatrix();
    if (clears_table(rot, g.position, gripper, table)) {
      g.orientation = rot;
      g.roll_adjustment = delta;
      g.pose = pose_from(rot, g.position);
      return g;
    }
  }
  throw Error(ErrorCode::TableCollision, "no roll within +-90 degrees keeps the gripper above the table");
}

// ---- pipeline ----------------------------------------------------------------------------

GraspPlan plan(const geom::PointCloud& cloud, std::span<const std::uint8_t> labels, const geom::TablePlane& table,
               const GripperModel& gripper, const PlannerConfig& config, const geom::RigidTransform& object_to_world) {
  cloud.validate();
  gripper.validate();
  config.validate();
  if (labels.size() != cloud.size()) throw Error(ErrorCode::ShapeError, "one affordance label per point required");
  std::vector<Vec3> affordance;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (labels[i]) affordance.push_back(cloud.points[i]);
  }
  if (affordance.empty()) throw Error(ErrorCode::NoAffordance, "no point is labeled as affordance");

  GraspPlan out;
  try {
    const auto pca = geom::pca_main_axis(affordance);
    out.main_axis = pca.axis;
    out.main_axis_tie = pca.tie;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateInput) throw;
    out.main_axis_tie = true;
  }

  const int m = choose_cluster_count(affordance, gripper, config.max_clusters);
  const auto clusters = kmeans(affordance, m, config.kmeans_iters, config.seed);
  const PackedPoints packed(cloud.points);
  double radius = config.sphere_radius_factor * geom::bounding_sphere_radius(cloud.points);
  if (!(radius > 0)) radius = config.sphere_radius_factor;

  std::vector<std::vector<ApproachPath>> per_cluster(m);
  out.diagnostics.resize(m);
  for (int c = 0; c < m; ++c) {
    auto& diag = out.diagnostics[c];
    diag.cluster_id = c;
    diag.points = static_cast<std::size_t>(std::count(clusters.assignment.begin(), clusters.assignment.end(), c));
    const auto candidates = generate_candidates(clusters.centroids[c], radius, config);
    diag.candidates = candidates.size();
    try {
      per_cluster[c] = filter_table(candidates, table);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoFeasibleApproach) throw;
      diag.failure = "no_feasible_approach";
      continue;
    }
    diag.feasible = per_cluster[c].size();
    score_paths(per_cluster[c], packed, out.main_axis, config.epsilon);
  }

  for (const auto& [c, path] : select_best(per_cluster)) {
    try {
      out.configurations.push_back(synthesize_pose(path, out.main_axis, gripper, table, c));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TableCollision) throw;
      out.diagnostics[c].failure = "table_collision";
    }
  }
  if (out.configurations.empty()) throw Error(ErrorCode::TableCollision, "every cluster's best approach hits the table");

  const Mat3& rw = object_to_world.rotation();
  for (auto& g : out.configurations) {
    g.orientation = rw * g.orientation;
    g.position = object_to_world.apply(g.position);
    g.approach.start = object_to_world.apply(g.approach.start);
    g.approach.grasp_point = object_to_world.apply(g.approach.grasp_point);
    g.pose = pose_from(g.orientation, g.position);
  }
  out.main_axis = rw * out.main_axis;
  return out;
}

std::string format_plan(const GraspPlan& plan) {
  std::string out;
  char line[320];
  for (const auto& g : plan.configurations) {
    std::snprintf(line, sizeof line, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", g.cluster_id,
                  g.approach.score, g.pose.x, g.pose.y, g.pose.z, g.pose.roll, g.pose.pitch, g.pose.yaw);
    out += line;
  }
  return out;
}

}  // namespace affgrasp::grasp

namespace affgrasp::grasp::reference {

double score_path(const ApproachPath& path, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon) {
  const Vec3 dir = (path.grasp_point - path.start).normalized();
  const double a = std::acos(std::min(1.0, std::abs(dir.dot(main_axis))));
  double sum = 0;
  for (const auto& p : cloud) {
    const double d = geom::point_segment_distance(p, path.start, path.grasp_point);
    sum += std::min(1.0, 1.0 / (d * d + epsilon));
  }
  return 2.0 * (std::numbers::pi - a) / std::numbers::pi * sum;
}

void score_paths(std::span<ApproachPath> paths, std::span<const Vec3> cloud, const Vec3& main_axis, double epsilon) {
  for (auto& p : paths) {
    p.angle = path_angle(p, main_axis);
    p.score = reference::score_path(p, cloud, main_axis, epsilon);
  }
}

}  // namespace affgrasp::grasp::reference
