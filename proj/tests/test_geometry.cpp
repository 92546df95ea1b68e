#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <numbers>

#include "affgrasp/error.hpp"
#include "affgrasp/geometry.hpp"
#include "affgrasp/rng.hpp"

using namespace affgrasp;
using namespace affgrasp::geom;

namespace {

PointCloud random_cloud(std::uint64_t seed, int n, double spread = 10.0) {
  Rng rng(seed);
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.emplace_back(uniform(rng, -spread, spread), uniform(rng, 0, spread), uniform(rng, -1, 2 * spread));
  return c;
}

}  // namespace

TEST_CASE("normalize: a single point lands at the grid center and inverts back") {
  PointCloud c{{Vec3(5, 5, 5)}, std::nullopt};
  const auto n = normalize_cloud(c, 32);
  CHECK((n.cloud.points[0] - Vec3(16, 16, 16)).norm() < 1e-12);
  CHECK((n.transform.invert(n.cloud.points[0]) - Vec3(5, 5, 5)).norm() < 1e-12);
}

TEST_CASE("normalize: unit cube spans R - 2 voxels with aspect preserved") {
  PointCloud c;
  for (int i = 0; i < 8; ++i) c.points.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  const auto n = normalize_cloud(c, 32);
  const auto box = bounding_box(n.cloud.points);
  // one voxel of padding (1/32 of the grid) per side
  const double expected = 32.0 * (1.0 - 2.0 / 32.0);
  for (int k = 0; k < 3; ++k) CHECK(box.extent()[k] == doctest::Approx(expected).epsilon(1e-12));
  CHECK((box.center() - Vec3(16, 16, 16)).norm() < 1e-12);

  PointCloud flat{{Vec3(0, 0, 0), Vec3(4, 0, 0), Vec3(4, 1, 0)}, std::nullopt};
  const auto e = bounding_box(normalize_cloud(flat, 32).cloud.points).extent();
  CHECK(e.x() == doctest::Approx(30));
  CHECK(e.y() == doctest::Approx(7.5));
}

TEST_CASE("normalize: round trip stays within 1e-9 of the extent") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto c = random_cloud(s, 200, 1.0 + 50.0 * static_cast<double>(s));
    const auto n = normalize_cloud(c, 32);
    const double extent = bounding_box(c.points).extent().maxCoeff();
    double worst = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      worst = std::max(worst, (n.transform.invert(n.cloud.points[i]) - c.points[i]).norm());
      CHECK(n.cloud.points[i].minCoeff() >= 1.0 - 1e-9);
      CHECK(n.cloud.points[i].maxCoeff() <= 31.0 + 1e-9);
    }
    CHECK(worst < 1e-9 * extent);
  }
}

TEST_CASE("normalize rejects an empty cloud") {
  CHECK_THROWS_AS(normalize_cloud(PointCloud{}, 32), Error);
}

TEST_CASE("voxelize: occupancy cases") {
  PointCloud one{{Vec3(0.5, 0.5, 0.5)}, std::nullopt};
  const auto g = voxelize(one, 32);
  CHECK(g.occupied_count() == 1);
  CHECK(g.at(0, 0, 0) == 1.0);

  PointCloud two{{Vec3(3.2, 4.1, 5.9), Vec3(3.8, 4.9, 5.1)}, std::nullopt};
  CHECK(voxelize(two, 32).occupied_count() == 1);

  PointCloud full;
  for (int z = 0; z < 32; ++z)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) full.points.emplace_back(x + 0.5, y + 0.5, z + 0.5);
  const auto f = voxelize(full, 32);
  CHECK(f.occupied_count() == 32768);
  // every cell center maps to its own index
  for (std::size_t i = 0; i < full.size(); i += 97) {
    const auto& p = full.points[i];
    CHECK(f.index(int(p.x()), int(p.y()), int(p.z())) == i);
  }
}

TEST_CASE("voxelize rejects points outside the grid") {
  PointCloud out{{Vec3(32.5, 1, 1)}, std::nullopt};
  CHECK_THROWS_AS(voxelize(out, 32), Error);
}

TEST_CASE("voxel mask to point labels") {
  const auto c = random_cloud(3, 500);
  const auto n = normalize_cloud(c, 16);
  VoxelGrid g(16, n.transform);
  for (auto v : voxel_mask_to_point_labels(c, g)) CHECK(v == 0);
  std::fill(g.values.begin(), g.values.end(), 1.0);
  for (auto v : voxel_mask_to_point_labels(c, g)) CHECK(v == 1);

  // lower half in x at 0.7: per-point lookup oracle
  std::fill(g.values.begin(), g.values.end(), 0.0);
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 8; ++x) g.values[g.index(x, y, z)] = 0.7;
  const auto labels = voxel_mask_to_point_labels(c, g, 0.5);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const int x = static_cast<int>(std::floor(n.transform.apply(c.points[i]).x()));
    CHECK(labels[i] == (x < 8 ? 1 : 0));
  }

  PointCloud far{{Vec3(1e6, 0, 0)}, std::nullopt};
  CHECK_THROWS_AS(voxel_mask_to_point_labels(far, g), Error);
}

TEST_CASE("pca main axis") {
  std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
  CHECK(std::abs(pca_main_axis(line).axis.dot(Vec3::UnitX())) == doctest::Approx(1.0).epsilon(1e-12));

  const Vec3 diag = Vec3(1, 1, 0).normalized();
  std::vector<Vec3> rotated;
  for (int i = 0; i < 4; ++i) rotated.push_back(i * diag);
  CHECK(std::abs(pca_main_axis(rotated).axis.dot(diag)) > 1.0 - 1e-6);

  // anisotropic Gaussian, compared against Eigen's solver on the same covariance
  Rng rng(42);
  std::normal_distribution<double> nd;
  std::vector<Vec3> blob;
  for (int i = 0; i < 1000; ++i) blob.emplace_back(3 * nd(rng), nd(rng), nd(rng));
  const auto ours = pca_main_axis(blob);
  const Vec3 mu = centroid(blob);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : blob) cov += (p - mu) * (p - mu).transpose();
  cov /= static_cast<double>(blob.size());
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 oracle = es.eigenvectors().col(2);
  CHECK(std::abs(ours.axis.dot(oracle)) > std::cos(1e-6));
  CHECK(std::acos(std::min(1.0, std::abs(ours.axis.dot(Vec3::UnitX())))) < 5.0 * std::numbers::pi / 180);
  CHECK(ours.eigenvalues[0] == doctest::Approx(es.eigenvalues()[2]).epsilon(1e-9));
}

TEST_CASE("symmetric_eigen3 agrees with Eigen on random matrices") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    Mat3 a;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = uniform(rng, -5, 5);
    Vec3 vals;
    Mat3 vecs;
    symmetric_eigen3(a, vals, vecs);
    Eigen::SelfAdjointEigenSolver<Mat3> es(a);
    for (int k = 0; k < 3; ++k) CHECK(vals[k] == doctest::Approx(es.eigenvalues()[2 - k]).epsilon(1e-9));
    CHECK((a * vecs - vecs * vals.asDiagonal()).norm() < 1e-9);
  }
}

TEST_CASE("pca flags an isotropic tie and rejects fewer than two distinct points") {
  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  CHECK(pca_main_axis(cube).tie);
  std::vector<Vec3> same{Vec3(1, 1, 1), Vec3(1, 1, 1)};
  CHECK_THROWS_AS(pca_main_axis(same), Error);
}

TEST_CASE("fibonacci sphere") {
  const auto one = fibonacci_sphere(1, Vec3(1, 2, 3), 2.5);
  REQUIRE(one.size() == 1);
  CHECK((one[0] - Vec3(1, 2, 3)).norm() == doctest::Approx(2.5));

  for (int n : {64, 256, 1024}) {
    const auto pts = fibonacci_sphere(n);
    REQUIRE(pts.size() == std::size_t(n));
    std::array<int, 8> octant{};
    for (const auto& p : pts) {
      CHECK(std::abs(p.norm() - 1.0) < 1e-9);
      octant[(p.x() > 0) + 2 * (p.y() > 0) + 4 * (p.z() > 0)]++;
    }
    for (int c : octant) {
      CHECK(c >= n / 8 - n / 12);
      CHECK(c <= n / 8 + n / 12);
    }
    if (n == 256)
      for (int c : octant) {
        CHECK(c >= 20);
        CHECK(c <= 44);
      }
  }
  CHECK_THROWS_AS(fibonacci_sphere(0), Error);
}

TEST_CASE("point to segment distance") {
  const Vec3 a(-1, 0, 0), b(1, 0, 0);
  CHECK(point_segment_distance(Vec3(0.3, 0, 0), a, b) < 1e-15);
  CHECK(point_segment_distance(Vec3(0, 1, 0), a, b) == doctest::Approx(1.0));
  CHECK(point_segment_distance(Vec3(2, 1, 0), a, b) == doctest::Approx(std::sqrt(2.0)));

  // dense sampling oracle
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const Vec3 p(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
    const Vec3 s(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
    const Vec3 e(uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, -3, 3));
    double best = 1e300;
    for (int k = 0; k <= 20000; ++k) best = std::min(best, (s + (e - s) * (k / 20000.0) - p).norm());
    const double d = point_segment_distance(p, s, e);
    CHECK(d <= best + 1e-12);
    CHECK(d >= best - (e - s).norm() / 20000.0);
  }
  CHECK_THROWS_AS(point_segment_distance(Vec3(0, 0, 0), a, a), Error);
}

TEST_CASE("rigid transforms") {
  const auto rz = RigidTransform::rotation_z(std::numbers::pi / 2);
  CHECK((rz.apply(Vec3(1, 0, 0)) - Vec3(0, 1, 0)).norm() < 1e-12);
  const auto t = RigidTransform::from_rpy(0.3, -0.2, 1.1, Vec3(1, 2, 3));
  const auto u = RigidTransform::from_rpy(-0.7, 0.5, 0.1, Vec3(-4, 0, 2));
  const Vec3 p(0.5, -1.5, 2.0);
  CHECK(((t * u).apply(p) - t.apply(u.apply(p))).norm() < 1e-12);
  CHECK((t.inverse().apply(t.apply(p)) - p).norm() < 1e-12);
  Mat3 reflect = Mat3::Identity();
  reflect(0, 0) = -1;
  CHECK_THROWS_AS(RigidTransform(reflect, Vec3::Zero()), Error);
  CHECK_THROWS_AS(TablePlane(Vec3(0, 0, 2), 0), Error);
  const auto table = TablePlane::horizontal(1.0).transformed(t);
  CHECK(table.signed_distance(t.apply(Vec3(4, 4, 1.0))) == doctest::Approx(0.0).epsilon(1e-12));
}
