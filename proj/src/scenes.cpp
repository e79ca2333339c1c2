#include "skelcover/scenes.hpp"

#include "skelcover/rng.hpp"

#include <algorithm>
#include <cmath>

namespace skelcover {

SceneKind scene_kind_from_string(const std::string& name) {
  if (name == "cylinder") return SceneKind::Cylinder;
  if (name == "pipe_network") return SceneKind::PipeNetwork;
  if (name == "y_tube") return SceneKind::YTube;
  if (name == "torus") return SceneKind::Torus;
  if (name == "wall_gap") return SceneKind::WallGap;
  if (name == "tower") return SceneKind::Tower;
  throw std::invalid_argument("unknown scene kind: " + name);
}

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::Cylinder: return "cylinder";
    case SceneKind::PipeNetwork: return "pipe_network";
    case SceneKind::YTube: return "y_tube";
    case SceneKind::Torus: return "torus";
    case SceneKind::WallGap: return "wall_gap";
    case SceneKind::Tower: return "tower";
  }
  return "?";
}

namespace {

Vec3 any_orthonormal(const Vec3& d) {
  Vec3 ref = std::fabs(d[2]) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
  return d.cross(ref).normalized();
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0) return Vec3::Zero();
  std::normal_distribution<double> g(0.0, sigma);
  return Vec3(g(rng), g(rng), g(rng));
}

struct Tube {
  Vec3 a, b;
  double r;
  double axis_dist(const Vec3& p) const {
    return point_segment_distance(p, a, b);
  }
};

// Sample n points over the union of tube surfaces; a candidate landing
// inside another tube is rejected. Returns per-point tube labels.
void sample_tube_union(const std::vector<Tube>& tubes, int n, double sigma,
                       std::mt19937_64& rng, PointCloud& cloud,
                       std::vector<int>& labels) {
  std::vector<double> areas;
  double total = 0;
  for (const auto& t : tubes) {
    double area = 2.0 * kPi * t.r * (t.b - t.a).norm();
    areas.push_back(area);
    total += area;
  }
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  int guard = 0;
  while ((int)cloud.points.size() < n && guard < 100 * n) {
    ++guard;
    double pick = uni(rng) * total;
    std::size_t k = 0;
    while (k + 1 < tubes.size() && pick > areas[k]) pick -= areas[k], ++k;
    const Tube& t = tubes[k];
    Vec3 axis = (t.b - t.a).normalized();
    Vec3 u = any_orthonormal(axis);
    Vec3 v = axis.cross(u);
    double s = uni(rng) * (t.b - t.a).norm();
    double theta = uni(rng) * 2.0 * kPi;
    Vec3 p = t.a + s * axis + t.r * (std::cos(theta) * u + std::sin(theta) * v);
    bool interior = false;
    for (std::size_t j = 0; j < tubes.size(); ++j)
      if (j != k && tubes[j].axis_dist(p) < tubes[j].r - 1e-9) interior = true;
    if (interior) continue;
    cloud.points.push_back(p + gaussian3(rng, sigma));
    labels.push_back((int)k);
  }
}

SceneGroundTruth tube_truth(const std::vector<Tube>& tubes,
                            std::vector<int> labels) {
  SceneGroundTruth gt;
  for (const auto& t : tubes) gt.skeleton_segments.push_back({t.a, t.b});
  gt.point_labels = std::move(labels);
  auto copy = tubes;
  gt.inside = [copy](const Vec3& p) {
    for (const auto& t : copy)
      if (t.axis_dist(p) < t.r) return true;
    return false;
  };
  return gt;
}

SyntheticScene make_cylinder(const SceneParams& p, std::mt19937_64& rng) {
  // Axis deliberately along x so the orientation solver starts away from
  // the fixed reference axis.
  Tube t{Vec3(-p.length / 2, 0, 0), Vec3(p.length / 2, 0, 0), p.radius};
  SyntheticScene s;
  std::vector<int> labels;
  sample_tube_union({t}, p.num_points, p.noise_sigma, rng, s.cloud, labels);
  s.truth = tube_truth({t}, std::move(labels));
  s.truth.expected_joints = 0;
  s.truth.expected_leaves = 2;
  return s;
}

SyntheticScene make_y_tube(const SceneParams& p, std::mt19937_64& rng) {
  double arm = p.length * 0.4;
  double r = p.radius * 0.5;
  Vec3 o(0, 0, 0);
  std::vector<Tube> tubes = {
      {o, o + arm * Vec3(0, 0, 1), r},
      {o, o + arm * Vec3(std::cos(-kPi / 6), 0, std::sin(-kPi / 6)), r},
      {o, o + arm * Vec3(-std::cos(-kPi / 6), 0, std::sin(-kPi / 6)), r}};
  SyntheticScene s;
  std::vector<int> labels;
  sample_tube_union(tubes, p.num_points, p.noise_sigma, rng, s.cloud, labels);
  s.truth = tube_truth(tubes, std::move(labels));
  s.truth.expected_joints = 1;
  s.truth.expected_leaves = 3;
  return s;
}

SyntheticScene make_tower(const SceneParams& p, std::mt19937_64& rng) {
  double h = p.length * 0.8;
  double arm = p.length * 0.3;
  double zc = 0.7 * h;
  std::vector<Tube> tubes = {
      {Vec3(0, 0, 0), Vec3(0, 0, h), p.radius * 0.8},
      {Vec3(-arm, 0, zc), Vec3(arm, 0, zc), p.radius * 0.5}};
  SyntheticScene s;
  std::vector<int> labels;
  sample_tube_union(tubes, p.num_points, p.noise_sigma, rng, s.cloud, labels);
  s.truth = tube_truth(tubes, std::move(labels));
  s.truth.expected_joints = 1;
  s.truth.expected_leaves = 4;
  return s;
}

SyntheticScene make_pipe_network(const SceneParams& p, std::mt19937_64& rng) {
  double hx = p.length / 2;
  double hz = p.length * 0.6;
  double r = p.radius * 0.6;
  Vec3 c00(-hx, 0, 0), c10(hx, 0, 0), c11(hx, 0, hz), c01(-hx, 0, hz);
  Vec3 m0(0, 0, 0), m1(0, 0, hz);
  std::vector<Tube> tubes = {{c00, m0, r}, {m0, c10, r},   {c10, c11, r},
                             {c11, m1, r}, {m1, c01, r},   {c01, c00, r},
                             {m0, m1, r}};
  SyntheticScene s;
  std::vector<int> labels;
  sample_tube_union(tubes, p.num_points, p.noise_sigma, rng, s.cloud, labels);
  s.truth = tube_truth(tubes, std::move(labels));
  s.truth.expected_joints = 2;
  s.truth.expected_leaves = 0;
  s.truth.expect_cycle = true;
  return s;
}

SyntheticScene make_torus(const SceneParams& p, std::mt19937_64& rng) {
  double R = p.major_radius;
  double r = p.radius * 0.5;
  SyntheticScene s;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  while ((int)s.cloud.points.size() < p.num_points) {
    double u = uni(rng) * 2.0 * kPi;
    double v = uni(rng) * 2.0 * kPi;
    // Area element scales with R + r*cos(v); rejection keeps it uniform.
    if (uni(rng) > (R + r * std::cos(v)) / (R + r)) continue;
    Vec3 pt((R + r * std::cos(v)) * std::cos(u),
            (R + r * std::cos(v)) * std::sin(u), r * std::sin(v));
    s.cloud.points.push_back(pt + gaussian3(rng, p.noise_sigma));
  }
  // Polyline ring approximating the central circle.
  int segs = 64;
  for (int i = 0; i < segs; ++i) {
    double a0 = 2.0 * kPi * i / segs;
    double a1 = 2.0 * kPi * (i + 1) / segs;
    s.truth.skeleton_segments.push_back(
        {Vec3(R * std::cos(a0), R * std::sin(a0), 0),
         Vec3(R * std::cos(a1), R * std::sin(a1), 0)});
  }
  s.truth.inside = [R, r](const Vec3& q) {
    double rho = std::sqrt(q[0] * q[0] + q[1] * q[1]);
    double d = std::sqrt((rho - R) * (rho - R) + q[2] * q[2]);
    return d < r;
  };
  s.truth.expect_cycle = true;
  return s;
}

SyntheticScene make_wall_gap(const SceneParams& p, std::mt19937_64& rng) {
  double hy = p.length * 0.3;
  double hz = p.length * 0.3;
  double t = 0.2;                 // half thickness
  double gy = hy * 0.25;          // gap half width
  double gz = hz * 0.6;           // gap height (from the floor)
  struct Face {
    Vec3 origin, du, dv;
    double area;
    bool cut;  // subtract the doorway region
  };
  std::vector<Face> faces;
  auto add = [&](Vec3 o, Vec3 du, Vec3 dv, bool cut) {
    faces.push_back({o, du, dv, du.norm() * dv.norm(), cut});
  };
  // Big faces, outer rim, then the doorway rim.
  add(Vec3(t, -hy, 0), Vec3(0, 2 * hy, 0), Vec3(0, 0, hz), true);
  add(Vec3(-t, -hy, 0), Vec3(0, 2 * hy, 0), Vec3(0, 0, hz), true);
  add(Vec3(-t, -hy, hz), Vec3(2 * t, 0, 0), Vec3(0, 2 * hy, 0), false);
  add(Vec3(-t, -hy, 0), Vec3(2 * t, 0, 0), Vec3(0, 0, hz), false);
  add(Vec3(-t, hy, 0), Vec3(2 * t, 0, 0), Vec3(0, 0, hz), false);
  add(Vec3(-t, -gy, gz), Vec3(2 * t, 0, 0), Vec3(0, 2 * gy, 0), false);
  add(Vec3(-t, -gy, 0), Vec3(2 * t, 0, 0), Vec3(0, 0, gz), false);
  add(Vec3(-t, gy, 0), Vec3(2 * t, 0, 0), Vec3(0, 0, gz), false);
  double total = 0;
  for (auto& f : faces) {
    if (f.cut) f.area -= (2 * gy) * gz;
    total += f.area;
  }
  SyntheticScene s;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  while ((int)s.cloud.points.size() < p.num_points) {
    double pick = uni(rng) * total;
    std::size_t k = 0;
    while (k + 1 < faces.size() && pick > faces[k].area) pick -= faces[k].area, ++k;
    const Face& f = faces[k];
    Vec3 q = f.origin + uni(rng) * f.du + uni(rng) * f.dv;
    if (f.cut && std::fabs(q[1]) < gy && q[2] < gz) continue;
    s.cloud.points.push_back(q + gaussian3(rng, p.noise_sigma));
  }
  // Mid-plane strip as the analytic "skeleton" stand-in.
  s.truth.skeleton_segments.push_back({Vec3(0, -hy, hz / 2), Vec3(0, hy, hz / 2)});
  s.truth.inside = [hy, hz, t, gy, gz](const Vec3& q) {
    bool in_slab = std::fabs(q[0]) < t && std::fabs(q[1]) < hy && q[2] > 0 &&
                   q[2] < hz;
    bool in_gap = std::fabs(q[1]) < gy && q[2] < gz;
    return in_slab && !in_gap;
  };
  return s;
}

}  // namespace

PointCloud sample_tube(const Vec3& a, const Vec3& b, double radius, int n,
                       double sigma, std::mt19937_64& rng) {
  PointCloud cloud;
  std::vector<int> labels;
  sample_tube_union({Tube{a, b, radius}}, n, sigma, rng, cloud, labels);
  return cloud;
}

SyntheticScene synth_scene(SceneKind kind, const SceneParams& params,
                           std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, (std::uint64_t)kind);
  switch (kind) {
    case SceneKind::Cylinder: return make_cylinder(params, rng);
    case SceneKind::PipeNetwork: return make_pipe_network(params, rng);
    case SceneKind::YTube: return make_y_tube(params, rng);
    case SceneKind::Torus: return make_torus(params, rng);
    case SceneKind::WallGap: return make_wall_gap(params, rng);
    case SceneKind::Tower: return make_tower(params, rng);
  }
  throw std::logic_error("unhandled scene kind");
}

}  // namespace skelcover
