#ifndef SKELCOVER_TYPES_HPP
#define SKELCOVER_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace skelcover {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

// Wrap to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

// Unsigned angular distance, min(|a1-a2|, 2pi-|a1-a2|).
inline double ang_dist(double a1, double a2) {
  double d = std::fabs(a1 - a2);
  d = std::fmod(d, 2.0 * kPi);
  return std::min(d, 2.0 * kPi - d);
}

// Signed shortest difference from `from` to `to`, in (-pi, pi].
inline double ang_diff(double to, double from) { return wrap_angle(to - from); }

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or same size as points (unit length)

  bool has_normals() const { return !normals.empty(); }
  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void require_nonempty() const {
    if (points.empty()) throw std::invalid_argument("empty input");
  }
};

struct Aabb {
  Vec3 lo{Vec3::Constant(kInf)};
  Vec3 hi{Vec3::Constant(-kInf)};

  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  bool contains(const Vec3& p, double tol = 0.0) const {
    return (p.array() >= lo.array() - tol).all() &&
           (p.array() <= hi.array() + tol).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

inline Aabb bounding_box(const std::vector<Vec3>& pts) {
  Aabb box;
  for (const auto& p : pts) box.expand(p);
  return box;
}

inline double point_segment_distance(const Vec3& p, const Vec3& a,
                                     const Vec3& b) {
  Vec3 ab = b - a;
  double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace skelcover

#endif
