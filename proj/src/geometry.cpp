#include "affgrasp/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "affgrasp/error.hpp"

namespace affgrasp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::CacheMismatch: return "CacheMismatch";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TooManyClusters: return "TooManyClusters";
    case ErrorCode::NoFeasibleApproach: return "NoFeasibleApproach";
    case ErrorCode::TableCollision: return "TableCollision";
    case ErrorCode::NoAffordance: return "NoAffordance";
    case ErrorCode::NoPlan: return "NoPlan";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace affgrasp

namespace affgrasp::geom {

void PointCloud::validate() const {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw Error(ErrorCode::InvalidArgument, "non-finite coordinate at point " + std::to_string(i));
    }
  }
  if (labels && labels->size() != points.size()) {
    throw Error(ErrorCode::InvalidArgument, "label count " + std::to_string(labels->size()) +
                                                " != point count " + std::to_string(points.size()));
  }
}

VoxelGrid::VoxelGrid(int r, NormalizationTransform f) : resolution(r), frame(f) {
  if (r <= 0) throw Error(ErrorCode::InvalidArgument, "resolution must be positive");
  values.assign(static_cast<std::size_t>(r) * r * r, 0.0);
}

std::size_t VoxelGrid::occupied_count(double threshold) const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [&](double v) { return v >= threshold; }));
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(ortho <= 1e-9) || std::abs(rotation.determinant() - 1.0) > 1e-9 || !translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "rotation is not a proper orthonormal matrix");
  }
}

RigidTransform RigidTransform::rotation_z(double angle, const Vec3& translation) {
  return from_rpy(0.0, 0.0, angle, translation);
}

RigidTransform RigidTransform::from_rpy(double roll, double pitch, double yaw, const Vec3& translation) {
  const Mat3 r = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();
  return RigidTransform(r, translation);
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation_ = rotation_ * other.rotation_;
  out.translation_ = rotation_ * other.translation_ + translation_;
  return out;
}

PointCloud RigidTransform::apply(const PointCloud& cloud) const {
  PointCloud out;
  out.labels = cloud.labels;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(apply(p));
  return out;
}

TablePlane::TablePlane(const Vec3& normal, double offset) : normal_(normal), offset_(offset) {
  if (std::abs(normal.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "table normal must be unit length");
  }
}

TablePlane TablePlane::transformed(const RigidTransform& t) const {
  // n'.(R p + t) = n.p  with n' = R n  =>  offset' = offset + n'.t
  const Vec3 n = t.apply_direction(normal_);
  return TablePlane(n.normalized(), offset_ + n.dot(t.translation()));
}

Aabb bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "bounding box of empty point set");
  Aabb box{points[0], points[0]};
  for (const auto& p : points) {
    box.lo = box.lo.cwiseMin(p);
    box.hi = box.hi.cwiseMax(p);
  }
  return box;
}

Vec3 centroid(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "centroid of empty point set");
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

double bounding_sphere_radius(std::span<const Vec3> points) {
  const Vec3 c = centroid(points);
  double r2 = 0.0;
  for (const auto& p : points) r2 = std::max(r2, (p - c).squaredNorm());
  return std::sqrt(r2);
}

NormalizedCloud normalize_cloud(const PointCloud& cloud, int resolution) {
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "cannot normalize an empty cloud");
  if (resolution < 3) throw Error(ErrorCode::InvalidArgument, "resolution must be at least 3");
  const Aabb box = bounding_box(cloud.points);
  const double extent = box.extent().maxCoeff();
  const double half = 0.5 * resolution;

  NormalizationTransform t;
  t.scale = extent > 0.0 ? (resolution - 2.0) / extent : 1.0;
  t.translation = Vec3::Constant(half) - t.scale * box.center();

  NormalizedCloud out;
  out.transform = t;
  out.cloud.labels = cloud.labels;
  out.cloud.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.cloud.points.push_back(t.apply(p));
  return out;
}

namespace {

std::array<int, 3> cell_of(const Vec3& q) {
  return {static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
          static_cast<int>(std::floor(q.z()))};
}

bool inside(const std::array<int, 3>& c, int r) {
  return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < r && c[1] < r && c[2] < r;
}

}  // namespace

VoxelGrid voxelize(const PointCloud& normalized, int resolution, const NormalizationTransform& frame) {
  VoxelGrid grid(resolution, frame);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const auto& q = normalized.points[i];
    const auto c = cell_of(q);
    if (!q.allFinite() || !inside(c, resolution)) {
      throw Error(ErrorCode::OutOfBounds, "point " + std::to_string(i) + " lies outside [0," +
                                              std::to_string(resolution) + ")");
    }
    grid.values[grid.index(c[0], c[1], c[2])] = 1.0;
  }
  return grid;
}

std::vector<std::uint8_t> voxel_mask_to_point_labels(const PointCloud& cloud, const VoxelGrid& grid,
                                                     double threshold) {
  std::vector<std::uint8_t> labels(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto c = cell_of(grid.frame.apply(cloud.points[i]));
    if (!inside(c, grid.resolution)) {
      throw Error(ErrorCode::FrameMismatch,
                  "point " + std::to_string(i) + " falls outside the grid under its frame");
    }
    labels[i] = grid.values[grid.index(c[0], c[1], c[2])] >= threshold ? 1 : 0;
  }
  return labels;
}

void symmetric_eigen3(const Mat3& input, Vec3& eigenvalues, Mat3& eigenvectors) {
  Mat3 a = input;
  Mat3 v = Mat3::Identity();
  for (int sweep = 0; sweep < 64; ++sweep) {
    const double off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off <= 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        Mat3 j = Mat3::Identity();
        j(p, p) = c;
        j(q, q) = c;
        j(p, q) = s;
        j(q, p) = -s;
        a = j.transpose() * a * j;
        a(p, q) = a(q, p) = 0.0;
        v = v * j;
      }
    }
  }
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  for (int k = 0; k < 3; ++k) {
    eigenvalues[k] = a(order[k], order[k]);
    eigenvectors.col(k) = v.col(order[k]);
  }
}

PcaAxis pca_main_axis(std::span<const Vec3> points) {
  if (points.size() < 2) throw Error(ErrorCode::DegenerateInput, "PCA needs at least two points");
  const Vec3 mean = centroid(points);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());
  if (cov.trace() <= 0.0) throw Error(ErrorCode::DegenerateInput, "PCA needs two distinct points");

  PcaAxis out;
  Mat3 vectors;
  symmetric_eigen3(cov, out.eigenvalues, vectors);
  out.axis = vectors.col(0).normalized();
  out.tie = std::abs(out.eigenvalues[0] - out.eigenvalues[1]) <= 1e-9 * std::max(1.0, out.eigenvalues[0]);
  for (int k = 0; k < 3; ++k) {
    if (std::abs(out.axis[k]) > 1e-12) {
      if (out.axis[k] < 0) out.axis = -out.axis;
      break;
    }
  }
  return out;
}

std::vector<Vec3> fibonacci_sphere(int n, const Vec3& center, double radius) {
  if (n <= 0) throw Error(ErrorCode::EmptyInput, "fibonacci_sphere needs n >= 1");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidArgument, "sphere radius must be positive");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * i;
    out.push_back(center + radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
  }
  return out;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  if (a == b) throw Error(ErrorCode::DegenerateSegment, "segment endpoints coincide");
  // Canonical endpoint order makes the result exactly symmetric in (a, b).
  const bool swap = std::lexicographical_compare(b.data(), b.data() + 3, a.data(), a.data() + 3);
  const Vec3& s = swap ? b : a;
  const Vec3& e = swap ? a : b;
  const Vec3 d = e - s;
  const double t = std::clamp((p - s).dot(d) / d.squaredNorm(), 0.0, 1.0);
  return (p - (s + t * d)).norm();
}

}  // namespace affgrasp::geom
