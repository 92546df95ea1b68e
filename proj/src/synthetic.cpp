#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>

#include "affgrasp/dataset.hpp"
#include "affgrasp/error.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::data {

using geom::Vec3;

namespace {

constexpr double kPi = std::numbers::pi;

struct Surface {
  double area = 0.0;
  std::uint8_t label = 0;
  std::function<Vec3(Rng&)> sample;
};

// Orthonormal pair spanning the plane orthogonal to `axis`.
std::pair<Vec3, Vec3> plane_basis(const Vec3& axis) {
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = axis.cross(helper).normalized();
  return {u, axis.cross(u)};
}

Surface cylinder_side(const Vec3& base, const Vec3& axis, double radius, double height, std::uint8_t label) {
  const auto [u, v] = plane_basis(axis);
  return {2.0 * kPi * radius * height, label, [=](Rng& rng) {
            const double t = uniform(rng, 0.0, 2.0 * kPi);
            return Vec3(base + uniform(rng, 0.0, height) * axis + radius * (std::cos(t) * u + std::sin(t) * v));
          }};
}

Surface disk(const Vec3& center, const Vec3& normal, double radius, std::uint8_t label) {
  const auto [u, v] = plane_basis(normal);
  return {kPi * radius * radius, label, [=](Rng& rng) {
            const double r = radius * std::sqrt(uniform01(rng));
            const double t = uniform(rng, 0.0, 2.0 * kPi);
            return Vec3(center + r * (std::cos(t) * u + std::sin(t) * v));
          }};
}

// Closed axis-aligned box surface, faces picked by area.
Surface box(const Vec3& lo, const Vec3& hi, std::uint8_t label) {
  const Vec3 e = hi - lo;
  const double axy = e.x() * e.y(), axz = e.x() * e.z(), ayz = e.y() * e.z();
  return {2.0 * (axy + axz + ayz), label, [=](Rng& rng) {
            const double pick = uniform(rng, 0.0, axy + axz + ayz);
            const bool high = uniform01(rng) < 0.5;
            Vec3 p(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()), uniform(rng, lo.z(), hi.z()));
            if (pick < axy) {
              p.z() = high ? hi.z() : lo.z();
            } else if (pick < axy + axz) {
              p.y() = high ? hi.y() : lo.y();
            } else {
              p.x() = high ? hi.x() : lo.x();
            }
            return p;
          }};
}

// Torus around `axis` through `center`, restricted to major angles [a0, a1] measured from `ref`.
Surface torus_arc(const Vec3& center, const Vec3& axis, const Vec3& ref, double major, double minor, double a0,
                  double a1, std::uint8_t label) {
  const Vec3 side = axis.cross(ref);
  return {(a1 - a0) * major * 2.0 * kPi * minor, label, [=](Rng& rng) {
            for (;;) {
              const double a = uniform(rng, a0, a1);
              const double b = uniform(rng, 0.0, 2.0 * kPi);
              // area element grows with distance from the torus axis
              if (uniform01(rng) * (major + minor) > major + minor * std::cos(b)) continue;
              const Vec3 radial = std::cos(a) * ref + std::sin(a) * side;
              return Vec3(center + (major + minor * std::cos(b)) * radial + minor * std::sin(b) * axis);
            }
          }};
}

// Open conical frustum side along +z from `base`.
Surface frustum_side(const Vec3& base, double r0, double r1, double height, std::uint8_t label) {
  const double slant = std::hypot(height, r1 - r0);
  const double rmax = std::max(r0, r1);
  return {kPi * (r0 + r1) * slant, label, [=](Rng& rng) {
            for (;;) {
              const double s = uniform01(rng);
              const double r = r0 + (r1 - r0) * s;
              if (uniform01(rng) * rmax > r) continue;
              const double t = uniform(rng, 0.0, 2.0 * kPi);
              return Vec3(base + Vec3(r * std::cos(t), r * std::sin(t), s * height));
            }
          }};
}

// Closed short cylinder with both caps.
void solid_cylinder(std::vector<Surface>& out, const Vec3& base, double radius, double height, std::uint8_t label) {
  out.push_back(cylinder_side(base, Vec3::UnitZ(), radius, height, label));
  out.push_back(disk(base, Vec3::UnitZ(), radius, label));
  out.push_back(disk(base + Vec3(0, 0, height), Vec3::UnitZ(), radius, label));
}

// One overall size per object times a small per-part spread, so part proportions (and the
// labeled fraction) stay stable while absolute size varies by up to about 20%.
struct Jitter {
  Rng& rng;
  double scale = 1.0;
  double operator()(double nominal) { return nominal * scale * uniform(rng, 0.95, 1.05); }
};

std::vector<Surface> mug(Jitter j) {
  const double r = j(3.8), h = j(9.5);
  // A small cup-style handle hugging the body.
  const double minor = j(0.6);
  const double major = j(1.5);
  std::vector<Surface> s;
  s.push_back(cylinder_side(Vec3::Zero(), Vec3::UnitZ(), r, h, 0));
  s.push_back(disk(Vec3::Zero(), Vec3::UnitZ(), r, 0));
  s.push_back(torus_arc(Vec3(r, 0, 0.5 * h), Vec3::UnitY(), Vec3::UnitX(), major, minor, -0.5 * kPi, 0.5 * kPi, 1));
  return s;
}

std::vector<Surface> knife(Jitter j) {
  const double handle_len = j(10.0), handle_w = j(3.0), handle_h = j(2.2);
  const double blade_len = j(15.0), blade_w = j(2.5), blade_t = 0.2;
  const double mid = 0.5 * handle_h;
  std::vector<Surface> s;
  s.push_back(box(Vec3(-handle_len, -0.5 * handle_w, 0.0), Vec3(0.0, 0.5 * handle_w, handle_h), 1));
  s.push_back(box(Vec3(0.0, -0.5 * blade_w, mid - 0.5 * blade_t), Vec3(blade_len, 0.5 * blade_w, mid + 0.5 * blade_t), 0));
  return s;
}

std::vector<Surface> chair(Jitter j) {
  const double half = 0.5 * j(12.0), seat_z = j(10.0), seat_t = j(1.5);
  const double leg_r = j(0.6), back_h = j(12.0), post = j(1.0), rail_h = j(1.5), rail_t = j(1.2);
  const double top = seat_z + seat_t + back_h;
  std::vector<Surface> s;
  s.push_back(box(Vec3(-half, -half, seat_z), Vec3(half, half, seat_z + seat_t), 0));
  for (double sx : {-1.0, 1.0}) {
    for (double sy : {-1.0, 1.0}) {
      const Vec3 base(sx * (half - leg_r), sy * (half - leg_r), 0.0);
      s.push_back(cylinder_side(base, Vec3::UnitZ(), leg_r, seat_z, 0));
    }
  }
  for (double sy : {-1.0, 1.0}) {
    s.push_back(box(Vec3(-half, sy * (half - post) - 0.5 * post, seat_z + seat_t),
                    Vec3(-half + post, sy * (half - post) + 0.5 * post, top - rail_h), 0));
  }
  s.push_back(box(Vec3(-half + 0.5 * post - 0.5 * rail_t, -half, top - rail_h),
                  Vec3(-half + 0.5 * post + 0.5 * rail_t, half, top), 1));
  return s;
}

std::vector<Surface> guitar(Jitter j) {
  const double lower = j(8.0), upper = j(6.0), depth = j(4.0);
  const double neck_len = j(20.0), neck_w = j(3.0), neck_t = j(2.0);
  const double upper_x = lower + 0.3 * upper;
  const double neck_start = upper_x + 0.8 * upper;
  const double mid = 0.5 * depth;
  std::vector<Surface> s;
  solid_cylinder(s, Vec3::Zero(), lower, depth, 0);
  solid_cylinder(s, Vec3(upper_x, 0, 0), upper, depth, 0);
  s.push_back(box(Vec3(neck_start, -0.5 * neck_w, mid - 0.5 * neck_t),
                  Vec3(neck_start + neck_len, 0.5 * neck_w, mid + 0.5 * neck_t), 1));
  return s;
}

std::vector<Surface> lamp(Jitter j) {
  const double base_r = j(6.0), base_h = j(1.5), pole_r = j(0.8), pole_h = j(20.0);
  const double shade_h = j(8.0), shade_lo = j(7.0), shade_hi = j(4.0);
  const double pole_top = base_h + pole_h;
  std::vector<Surface> s;
  solid_cylinder(s, Vec3::Zero(), base_r, base_h, 0);
  s.push_back(cylinder_side(Vec3(0, 0, base_h), Vec3::UnitZ(), pole_r, pole_h, 1));
  s.push_back(frustum_side(Vec3(0, 0, pole_top - 0.25 * shade_h), shade_lo, shade_hi, shade_h, 0));
  return s;
}

}  // namespace

LabeledSample generate_synthetic(Category category, std::uint64_t seed, int n_points) {
  if (n_points < 500) throw Error(ErrorCode::InvalidArgument, "synthetic objects need at least 500 points");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(category) + 1));
  Jitter jitter{rng};
  jitter.scale = uniform(rng, 0.85, 1.15);
  std::vector<Surface> surfaces;
  switch (category) {
    case Category::Mug: surfaces = mug(jitter); break;
    case Category::Chair: surfaces = chair(jitter); break;
    case Category::Knife: surfaces = knife(jitter); break;
    case Category::Guitar: surfaces = guitar(jitter); break;
    case Category::Lamp: surfaces = lamp(jitter); break;
    default: throw Error(ErrorCode::UnknownCategory, "no generator for category");
  }

  // Largest-remainder apportionment of points by surface area.
  double total = 0.0;
  for (const auto& s : surfaces) total += s.area;
  std::vector<int> counts(surfaces.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    const double exact = n_points * surfaces[i].area / total;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int k = 0; assigned < n_points; ++k, ++assigned) ++counts[remainders[k].second];

  LabeledSample out;
  out.id = std::string(to_string(category)) + "_" + std::to_string(seed);
  std::transform(out.id.begin(), out.id.end(), out.id.begin(), [](unsigned char c) { return std::tolower(c); });
  out.category = category;
  out.cloud.labels.emplace();
  out.cloud.points.reserve(n_points);
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    for (int k = 0; k < counts[i]; ++k) {
      out.cloud.points.push_back(surfaces[i].sample(rng));
      out.cloud.labels->push_back(surfaces[i].label);
    }
  }
  out.validate();
  return out;
}

}  // namespace affgrasp::data
