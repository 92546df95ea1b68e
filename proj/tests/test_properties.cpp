#include <doctest.h>

#include "support/properties.hpp"

using namespace affgrasp::testing;

TEST_CASE("IoU equals the set-count oracle") {
  const auto r = iou_property(2000, 17);
  INFO(r.first);
  CHECK(r.ok());
}

TEST_CASE("Fibonacci lattice norm and octant balance") {
  const auto r = fibonacci_property();
  INFO(r.first);
  CHECK(r.ok());
}

TEST_CASE("k-means inertia never rises") {
  const auto r = kmeans_inertia_property(30, 3);
  INFO(r.first);
  CHECK(r.ok());
}

TEST_CASE("planner winner follows rigid motions") {
  const auto r = planner_rigid_invariance(10, 21);
  INFO(r.first);
  CHECK(r.ok());
}

TEST_CASE("checkpoint bytes round trip") {
  const auto r = checkpoint_roundtrip_property(5);
  INFO(r.first);
  CHECK(r.ok());
}
