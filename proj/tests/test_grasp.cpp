#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "affgrasp/dataset.hpp"
#include "affgrasp/error.hpp"
#include "affgrasp/grasp.hpp"
#include "affgrasp/rng.hpp"

using namespace affgrasp;
using namespace affgrasp::grasp;
using geom::Mat3;
using geom::TablePlane;
using geom::Vec3;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an affgrasp::Error");
  return ErrorCode::InvalidArgument;
}

double sse(const std::vector<Vec3>& pts, unsigned mask) {
  Vec3 c[2] = {Vec3::Zero(), Vec3::Zero()};
  int n[2] = {0, 0};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const int g = (mask >> i) & 1;
    c[g] += pts[i];
    ++n[g];
  }
  if (n[0] == 0 || n[1] == 0) return 1e300;
  c[0] /= n[0];
  c[1] /= n[1];
  double s = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) s += (pts[i] - c[(mask >> i) & 1]).squaredNorm();
  return s;
}

}  // namespace

TEST_CASE("k-means with one cluster per distinct point") {
  const std::vector<Vec3> pts{Vec3(0, 0, 0), Vec3(5, 0, 0), Vec3(0, 7, 1), Vec3(5, 0, 0)};
  const auto r = kmeans(pts, 3, 20, 1);
  CHECK(r.inertia.back() == 0.0);
  for (const auto& c : r.centroids)
    CHECK(std::any_of(pts.begin(), pts.end(), [&](const Vec3& p) { return (p - c).norm() < 1e-12; }));
  CHECK(code_of([&] { kmeans(pts, 5, 20, 1); }) == ErrorCode::TooManyClusters);
  CHECK(code_of([] { kmeans({}, 1, 20, 1); }) == ErrorCode::TooManyClusters);
}

TEST_CASE("k-means on two blobs matches the exhaustive two-partition optimum") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Vec3 a(0, 0, 0), b(10, 2, -3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i) pts.push_back(a + Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
    for (int i = 0; i < 6; ++i) pts.push_back(b + Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)));
    unsigned best_mask = 0;
    double best = 1e300;
    for (unsigned mask = 1; mask < (1u << pts.size()) / 2; ++mask) {
      const double s = sse(pts, mask);
      if (s < best) {
        best = s;
        best_mask = mask;
      }
    }
    Vec3 oc[2] = {Vec3::Zero(), Vec3::Zero()};
    int on[2] = {0, 0};
    for (std::size_t i = 0; i < pts.size(); ++i) {
      oc[(best_mask >> i) & 1] += pts[i];
      on[(best_mask >> i) & 1]++;
    }
    oc[0] /= on[0];
    oc[1] /= on[1];

    const auto r = kmeans(pts, 2, 50, seed);
    CHECK(r.inertia.back() == doctest::Approx(best).epsilon(1e-9));
    const double sep = (b - a).norm();
    for (const auto& c : r.centroids) CHECK(std::min((c - oc[0]).norm(), (c - oc[1]).norm()) < 0.1 * sep);
    const auto again = kmeans(pts, 2, 50, seed);
    CHECK(again.assignment == r.assignment);
    CHECK(again.inertia == r.inertia);
  }
}

TEST_CASE("cluster count from the affordance extent") {
  GripperModel g;
  auto line = [&](double extent) {
    std::vector<Vec3> pts;
    for (int i = 0; i <= 50; ++i) pts.emplace_back(extent * i / 50.0, 0.01 * (i % 2), 0);
    return pts;
  };
  CHECK(choose_cluster_count(line(g.max_aperture), g, 5) == 1);
  CHECK(choose_cluster_count(line(3.4 * g.max_aperture), g, 5) == 3);
  CHECK(choose_cluster_count(line(100 * g.max_aperture), g, 5) == 5);
  CHECK(choose_cluster_count(line(0.1), g, 5) == 1);
}

TEST_CASE("candidate generation on the Fibonacci lattice") {
  PlannerConfig cfg;
  const Vec3 gp(1, -2, 3);
  const auto c = generate_candidates(gp, 12.5, cfg);
  REQUIRE(c.size() == 256);
  for (const auto& p : c) {
    CHECK(std::abs((p.start - gp).norm() - 12.5) < 1e-9);
    CHECK(p.grasp_point == gp);
  }
  const Vec3 shift(4, 4, -1);
  const auto d = generate_candidates(gp + shift, 12.5, cfg);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK((d[i].start - c[i].start - shift).norm() < 1e-9);
}

TEST_CASE("table filtering") {
  PlannerConfig cfg;
  const auto c = generate_candidates(Vec3(0, 0, 0), 10, cfg);
  CHECK(filter_table(c, TablePlane::horizontal(-100)).size() == 256);
  const auto half = filter_table(c, TablePlane::horizontal(0)).size();
  CHECK(half >= 120);
  CHECK(half <= 136);
  CHECK(code_of([&] { filter_table(c, TablePlane::horizontal(50)); }) == ErrorCode::NoFeasibleApproach);
}

TEST_CASE("path score: hand-computed cases") {
  ApproachPath p{Vec3(0, 0, 10), Vec3(0, 0, 0)};
  // main axis orthogonal to the path, the one point on it
  const std::vector<Vec3> on{Vec3(0, 0, 5)};
  CHECK(score_path(p, on, Vec3::UnitX(), 0.01) == 1.0);
  CHECK(reference::score_path(p, on, Vec3::UnitX(), 0.01) == 1.0);
  // parallel axis, one point at distance 10
  const std::vector<Vec3> far{Vec3(10, 0, 5)};
  const double expected = 2.0 * std::min(1.0, 1.0 / (100.0 + 0.01));
  CHECK(score_path(p, far, Vec3::UnitZ(), 0.01) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(expected == doctest::Approx(0.019998).epsilon(1e-5));
}

TEST_CASE("path score equals the per-point loop") {
  Rng rng(77);
  for (int t = 0; t < 200; ++t) {
    std::vector<Vec3> cloud(1 + rng() % 200);
    for (auto& q : cloud) q = Vec3(uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5));
    ApproachPath p{Vec3(uniform(rng, -9, 9), uniform(rng, -9, 9), uniform(rng, -9, 9)),
                   Vec3(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -2, 2))};
    const Vec3 axis = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)).normalized();
    double sum = 0;
    for (const auto& q : cloud) {
      const double d = geom::point_segment_distance(q, p.start, p.grasp_point);
      sum += std::min(1.0, 1.0 / (d * d + 0.01));
    }
    const double a = std::acos(std::min(1.0, std::abs(p.direction().dot(axis))));
    const double oracle = 2.0 * (std::numbers::pi - a) / std::numbers::pi * sum;
    CHECK(std::abs(score_path(p, PackedPoints(cloud), axis, 0.01) - oracle) <= 1e-12 * std::max(1.0, oracle));
  }
}

TEST_CASE("winner selection and tie rule") {
  ApproachPath p1{Vec3(0, 0, 1), Vec3::Zero(), 0.5, 0.3};
  const auto one = select_best({{p1}});
  REQUIRE(one.size() == 1);
  CHECK(one[0].second.start == p1.start);

  ApproachPath a{Vec3(1, 0, 0), Vec3::Zero(), 0.9, 0.1}, b{Vec3(0, 1, 0), Vec3::Zero(), 0.4, 0.1};
  const auto two = select_best({{a}, {b}});
  REQUIRE(two.size() == 2);
  CHECK(two[0].second.score == 0.4);
  CHECK(two[0].first == 1);
  CHECK(two[1].second.score == 0.9);

  ApproachPath low{Vec3(1, 0, 0), Vec3::Zero(), 0.7, 0.2}, high{Vec3(0, 1, 0), Vec3::Zero(), 0.7, 1.0};
  CHECK(select_best({{high, low}})[0].second.angle == 0.2);
  CHECK(ranks_before(low, high));
  CHECK_FALSE(ranks_before(high, low));
  CHECK(code_of([] { select_best({{}, {}}); }) == ErrorCode::NoFeasibleApproach);
}

TEST_CASE("pose synthesis") {
  const GripperModel g;
  const auto far = TablePlane::horizontal(-1000);
  // top grasp
  ApproachPath top{Vec3(0, 0, 20), Vec3(0, 0, 5)};
  const auto c = synthesize_pose(top, Vec3::UnitX(), g, far);
  CHECK(std::abs(c.orientation.col(0).dot(Vec3::UnitY())) == doctest::Approx(1.0));
  CHECK((c.orientation.col(2) - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK(std::abs(c.pose.pitch) == doctest::Approx(std::numbers::pi));
  CHECK(c.roll_adjustment == 0.0);
  CHECK_FALSE(c.axis_fallback);
  // palm sits palm_depth behind the grasp point
  CHECK((c.position - Vec3(0, 0, 5 + g.palm_depth)).norm() < 1e-12);
  const auto back = geom::RigidTransform::from_rpy(c.pose.roll, c.pose.pitch, c.pose.yaw);
  CHECK((back.rotation() - c.orientation).norm() < 1e-9);
  CHECK(c.orientation.determinant() == doctest::Approx(1.0));

  ApproachPath along{Vec3(20, 0.1, 5), Vec3(0, 0, 5)};
  CHECK(synthesize_pose(along, Vec3::UnitX(), g, far).axis_fallback);

  // a side approach just above the table needs a roll to lift the lower finger
  ApproachPath low{Vec3(20, 0, 1.5), Vec3(0, 0, 1.5)};
  const auto table = TablePlane::horizontal(0);
  const auto rolled = synthesize_pose(low, Vec3::UnitY(), g, table);
  CHECK(rolled.roll_adjustment != 0.0);
  CHECK(clears_table(rolled.orientation, rolled.position, g, table));
  ApproachPath under{Vec3(20, 0, 0.2), Vec3(0, 0, 0.2)};
  CHECK(code_of([&] { synthesize_pose(under, Vec3::UnitY(), g, table); }) == ErrorCode::TableCollision);
}

TEST_CASE("plan: mug grasps land on the handle and repeat") {
  const GripperModel g;
  const PlannerConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto mug = data::generate_synthetic(data::Category::Mug, seed, 2000);
    std::vector<Vec3> handle;
    for (std::size_t i = 0; i < mug.cloud.size(); ++i)
      if ((*mug.cloud.labels)[i]) handle.push_back(mug.cloud.points[i]);
    auto box = geom::bounding_box(handle);
    const Vec3 pad = 0.05 * box.extent();
    box.lo -= pad;
    box.hi += pad;
    const auto plan1 = plan(mug.cloud, *mug.cloud.labels, TablePlane::horizontal(0), g, cfg);
    REQUIRE_FALSE(plan1.configurations.empty());
    for (const auto& c : plan1.configurations) {
      const auto& gp = c.approach.grasp_point;
      CHECK((gp.array() >= box.lo.array()).all());
      CHECK((gp.array() <= box.hi.array()).all());
    }
    for (std::size_t i = 1; i < plan1.configurations.size(); ++i)
      CHECK(plan1.configurations[i - 1].approach.score <= plan1.configurations[i].approach.score);
    const auto plan2 = plan(mug.cloud, *mug.cloud.labels, TablePlane::horizontal(0), g, cfg);
    CHECK(format_plan(plan1) == format_plan(plan2));
  }
}

TEST_CASE("plan: a thin vertical rod is approached from the side") {
  geom::PointCloud rod;
  rod.labels.emplace();
  for (int i = 0; i < 400; ++i) {
    const double t = 2 * std::numbers::pi * i / 20.0;
    rod.points.emplace_back(0.3 * std::cos(t), 0.3 * std::sin(t), 20.0 * (i / 20) / 20.0);
    rod.labels->push_back(1);
  }
  const auto p = plan(rod, *rod.labels, TablePlane::horizontal(-50), GripperModel{}, PlannerConfig{});
  const Vec3 d = p.configurations.front().approach.direction();
  CHECK(std::asin(std::abs(d.z())) < 25.0 * std::numbers::pi / 180);

  // brute force over the same lattice agrees on the winner's score
  PlannerConfig cfg;
  const auto radius = cfg.sphere_radius_factor * geom::bounding_sphere_radius(rod.points);
  double best = 1e300;
  for (const auto& c : generate_candidates(p.configurations.front().approach.grasp_point, radius, cfg))
    best = std::min(best, reference::score_path(c, rod.points, p.main_axis, cfg.epsilon));
  CHECK(p.configurations.front().approach.score == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("plan errors") {
  const auto mug = data::generate_synthetic(data::Category::Mug, 1, 800);
  std::vector<std::uint8_t> none(mug.cloud.size(), 0);
  CHECK(code_of([&] { plan(mug.cloud, none, TablePlane::horizontal(0), {}, {}); }) == ErrorCode::NoAffordance);
  std::vector<std::uint8_t> short_labels(3, 1);
  CHECK(code_of([&] { plan(mug.cloud, short_labels, TablePlane::horizontal(0), {}, {}); }) == ErrorCode::ShapeError);
  GripperModel bad;
  bad.max_aperture = -1;
  CHECK_THROWS_AS(plan(mug.cloud, *mug.cloud.labels, TablePlane::horizontal(0), bad, {}), Error);
}
