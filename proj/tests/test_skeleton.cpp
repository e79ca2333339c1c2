#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "skelcover/rng.hpp"
#include "skelcover/scenes.hpp"
#include "skelcover/skeleton.hpp"

#include <sstream>

using namespace skelcover;

namespace {

// Deterministic near-uniform sphere sampling (golden spiral).
PointCloud sphere_cloud(int n, double radius, const Vec3& center) {
  PointCloud c;
  double ga = kPi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    double z = 1.0 - 2.0 * (i + 0.5) / n;
    double r = std::sqrt(1.0 - z * z);
    double phi = ga * i;
    c.points.push_back(center +
                       radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
  }
  return c;
}

// Circle of radius 1 in the y-z plane with radial normals: the analytic
// cylinder cross-section at x=0.
PointCloud ring_cloud(int n, double sigma, std::uint64_t seed) {
  PointCloud c;
  auto rng = make_rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (int i = 0; i < n; ++i) {
    double a = 2.0 * kPi * i / n;
    Vec3 radial(0, std::cos(a), std::sin(a));
    Vec3 p = radial;
    if (sigma > 0) p += Vec3(g(rng), g(rng), g(rng));
    c.points.push_back(p);
    c.normals.push_back(radial);
  }
  return c;
}

int count_degree(const SkeletonGraph& g, int degree) {
  int n = 0;
  for (int d : g.degrees())
    if (d == degree) ++n;
  return n;
}

}  // namespace

TEST_CASE("normalize_cloud symmetric sphere markers") {
  PointCloud c;
  Vec3 center(10, 0, 0);
  for (int a = 0; a < 3; ++a)
    for (int s : {-1, 1}) {
      Vec3 p = center;
      p[a] += 5.0 * s;
      c.points.push_back(p);
    }
  auto [out, t] = normalize_cloud(c);
  CHECK(t.center == center);
  CHECK(t.scale == doctest::Approx(1.0 / 5.0).epsilon(1e-15));
  double max_r = 0;
  for (const auto& p : out.points) max_r = std::max(max_r, p.norm());
  CHECK(max_r == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("normalize_cloud round-trips and errors") {
  auto rng = make_rng(2);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  PointCloud c;
  for (int i = 0; i < 200; ++i)
    c.points.push_back(Vec3(50, -20, 7) +
                       Vec3(uni(rng), uni(rng), uni(rng)));
  auto [out, t] = normalize_cloud(c);
  for (std::size_t i = 0; i < c.points.size(); ++i)
    CHECK((t.to_world(out.points[i]) - c.points[i]).norm() < 1e-9);

  PointCloud degenerate;
  degenerate.points.assign(5, Vec3(1, 2, 3));
  CHECK_THROWS_WITH_AS(normalize_cloud(degenerate), "degenerate cloud",
                       std::invalid_argument);
}

TEST_CASE("normalize_cloud cylinder touches the unit sphere") {
  auto rng = make_rng(4);
  PointCloud c = sample_tube(Vec3(-5, 0, 0), Vec3(5, 0, 0), 1.0, 5000, 0.0,
                             rng);
  auto [out, t] = normalize_cloud(c);
  double max_r = 0;
  for (const auto& p : out.points) max_r = std::max(max_r, p.norm());
  CHECK(max_r == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("estimate_normals planar cloud") {
  PointCloud c;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j)
      c.points.push_back(Vec3(0.1 * i, 0.1 * j, 0.0));
  PointCloud out = estimate_normals(c, 16);
  for (const auto& n : out.normals) {
    CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::fabs(n.dot(Vec3::UnitZ())) > std::cos(1e-3));
  }
}

TEST_CASE("estimate_normals sphere radial oracle") {
  PointCloud c = sphere_cloud(4000, 1.0, Vec3::Zero());
  PointCloud out = estimate_normals(c, 16);
  int good = 0;
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    Vec3 radial = c.points[i].normalized();
    if (out.normals[i].dot(radial) > std::cos(deg2rad(5.0))) ++good;
  }
  CHECK(good >= (int)(0.99 * c.points.size()));
}

TEST_CASE("estimate_normals cylinder perpendicular oracle") {
  auto rng = make_rng(6);
  PointCloud c = sample_tube(Vec3(-5, 0, 0), Vec3(5, 0, 0), 1.0, 6000, 0.0,
                             rng);
  PointCloud out = estimate_normals(c, 16);
  int good = 0;
  for (const auto& n : out.normals)
    if (std::fabs(n.dot(Vec3::UnitX())) < std::sin(deg2rad(5.0))) ++good;
  CHECK(good >= (int)(0.99 * c.points.size()));

  CHECK_THROWS_WITH_AS(estimate_normals(c, 2), "insufficient neighborhood",
                       std::invalid_argument);
}

TEST_CASE("downsample degenerate and small cases") {
  PointCloud c;
  c.points = {Vec3(0.1, 0.1, 0.1), Vec3(0.2, 0.15, 0.12)};
  PointCloud one = downsample(c, 10.0);
  REQUIRE(one.points.size() == 1);
  CHECK((one.points[0] - Vec3(0.15, 0.125, 0.11)).norm() < 1e-12);

  PointCloud two = downsample(c, 0.08);
  CHECK(two.points.size() == 2);
}

TEST_CASE("downsample matches independent bucket count") {
  auto rng = make_rng(8);
  PointCloud c = sample_tube(Vec3(-5, 0, 0), Vec3(5, 0, 0), 1.0, 20000, 0.0,
                             rng);
  auto [norm, t] = normalize_cloud(c);
  PointCloud down = downsample(norm, 0.05);
  std::set<std::array<int, 3>> keys;
  for (const auto& p : norm.points)
    keys.insert({(int)std::floor(p[0] / 0.05), (int)std::floor(p[1] / 0.05),
                 (int)std::floor(p[2] / 0.05)});
  CHECK(down.points.size() == keys.size());
}

TEST_CASE("rosa_orientation converges to cylinder axis on a ring") {
  PointCloud ring = ring_cloud(60, 0.0, 1);
  KdTree tree(ring.points);
  SkeletonParams params;
  params.leaf = 0.4;  // r_neigh 2.0 spans the whole ring
  bool flag = false;
  // v0 orthogonal to the point normal but far from the axis.
  Vec3 n = ring.normals[0];
  Vec3 v0 = (Vec3(0.3, 1, 0.4).cross(n)).normalized();
  Vec3 v = rosa_orientation(ring, tree, 0, v0, params, &flag);
  CHECK(!flag);
  CHECK(std::fabs(v.dot(Vec3::UnitX())) > std::cos(deg2rad(2.0)));
}

TEST_CASE("rosa_orientation identical normals returns orthogonal direction") {
  PointCloud c;
  auto rng = make_rng(9);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (int i = 0; i < 40; ++i) {
    c.points.push_back(Vec3(uni(rng), uni(rng), 0.02 * uni(rng)));
    c.normals.push_back(Vec3::UnitZ());
  }
  KdTree tree(c.points);
  SkeletonParams params;
  params.leaf = 0.4;
  Vec3 a = rosa_orientation(c, tree, 0, Vec3::UnitX(), params);
  CHECK(std::fabs(a.dot(Vec3::UnitZ())) < 1e-3);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-9));
  Vec3 b = rosa_orientation(c, tree, 0, Vec3::UnitX(), params);
  CHECK(a == b);  // deterministic tie-break
}

TEST_CASE("rosa_orientation fixed point terminates immediately") {
  PointCloud ring = ring_cloud(60, 0.0, 1);
  KdTree tree(ring.points);
  SkeletonParams params;
  params.leaf = 0.4;
  int iters = 0;
  Vec3 v = rosa_orientation(ring, tree, 0, Vec3::UnitX(), params, nullptr,
                            &iters);
  CHECK(iters == 1);
  CHECK(std::fabs(v.dot(Vec3::UnitX())) > std::cos(params.tol_rad));
}

TEST_CASE("rosa_orientation energy never exceeds the start") {
  auto rng = make_rng(10);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud ring = ring_cloud(80, 0.02, 100 + trial);
    KdTree tree(ring.points);
    SkeletonParams params;
    params.leaf = 0.4;
    int idx = trial % 80;
    Vec3 n = ring.normals[idx];
    Vec3 v0 = (Vec3(uni(rng), uni(rng), uni(rng)).cross(n)).normalized();
    Vec3 v = rosa_orientation(ring, tree, idx, v0, params);
    auto slab = slab_neighborhood(ring, tree, idx, v, params.r_neigh(),
                                  params.r_slab());
    Eigen::Matrix3d m = normal_second_moment(ring, slab);
    CHECK(v.dot(m * v) <= v0.dot(m * v0) + 1e-12);
  }
}

TEST_CASE("rosa_position two orthogonal normal lines") {
  PointCloud c;
  c.points = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
  c.normals = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
  Vec3 x = rosa_position(c, {0, 1}, 0);
  CHECK(x.norm() < 1e-12);
}

TEST_CASE("rosa_position circle center and residual") {
  PointCloud ring;
  for (int i = 0; i < 50; ++i) {
    double a = 2.0 * kPi * i / 50;
    ring.points.push_back(Vec3(std::cos(a), std::sin(a), 0));
    ring.normals.push_back(Vec3(std::cos(a), std::sin(a), 0));
  }
  std::vector<int> all(50);
  std::iota(all.begin(), all.end(), 0);
  Vec3 x = rosa_position(ring, all, 0);
  CHECK(x.norm() < 1e-6);

  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Vec3 b = Vec3::Zero();
  for (int j : all) {
    Eigen::Matrix3d m =
        Eigen::Matrix3d::Identity() - ring.normals[j] * ring.normals[j].transpose();
    A += m;
    b += m * ring.points[j];
  }
  CHECK((A * x - b).norm() <= 1e-8 * std::max(b.norm(), 1.0));
}

TEST_CASE("rosa_position noisy cross-section stays near the axis") {
  PointCloud ring = ring_cloud(80, 0.01, 12);
  std::vector<int> all(80);
  std::iota(all.begin(), all.end(), 0);
  Vec3 x = rosa_position(ring, all, 0);
  CHECK(x.norm() < 0.05);
}

TEST_CASE("rosa_position parallel normals fall back with flag") {
  PointCloud c;
  c.points = {Vec3(0, 0, 0), Vec3(1, 0, 0.4)};
  c.normals = {Vec3(0, 0, 1), Vec3(0, 0, 1)};
  bool flag = false;
  Vec3 x = rosa_position(c, {0, 1}, 0, &flag);
  CHECK(flag);
  CHECK((x - Vec3(0, 0, 0.2)).norm() < 1e-12);

  CHECK_THROWS_AS(rosa_position(c, {}, 0), std::invalid_argument);
}

TEST_CASE("smooth_and_link straightens a jittered segment") {
  auto rng = make_rng(14);
  PointCloud cloud =
      sample_tube(Vec3(0, 0, 0), Vec3(1, 0, 0), 0.05, 4000, 0.0, rng);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<RosaPoint> rosa;
  for (int i = 0; i < 300; ++i) {
    // Scatter within a 0.03 disc around the segment.
    Vec3 off(0, uni(rng), uni(rng));
    while (off.norm() > 1.0) off = Vec3(0, uni(rng), uni(rng));
    RosaPoint r;
    r.position = Vec3(i / 299.0, 0, 0) + 0.03 * off;
    r.orientation = Vec3::UnitX();
    r.source_index = i;
    rosa.push_back(r);
  }
  SkeletonParams params;
  params.leaf = 0.1;
  SkeletonGraph g = smooth_and_link(rosa, cloud, params);
  REQUIRE(g.vertices.size() >= 5);
  for (const auto& v : g.vertices)
    CHECK(point_segment_distance(v, Vec3(0, 0, 0), Vec3(1, 0, 0)) < 0.01);
  CHECK(count_degree(g, 1) == 2);
  CHECK(count_degree(g, 2) == (int)g.vertices.size() - 2);
  CHECK(g.edges.size() == g.vertices.size() - 1);
}

TEST_CASE("smooth_and_link bridges fragments of one connected cloud") {
  auto rng = make_rng(15);
  PointCloud cloud =
      sample_tube(Vec3(0, 0, 0), Vec3(1, 0, 0), 0.08, 6000, 0.0, rng);
  std::vector<RosaPoint> rosa;
  auto add_run = [&](double lo, double hi) {
    for (int i = 0; i <= 20; ++i) {
      RosaPoint r;
      r.position = Vec3(lo + (hi - lo) * i / 20.0, 0, 0);
      r.orientation = Vec3::UnitX();
      r.source_index = (int)rosa.size();
      rosa.push_back(r);
    }
  };
  add_run(0.0, 0.4);
  add_run(0.6, 1.0);
  SkeletonParams params;
  SkeletonGraph g = smooth_and_link(rosa, cloud, params);
  auto comp = g.components();
  CHECK(*std::max_element(comp.begin(), comp.end()) == 0);  // connected
  int long_edges = 0;
  for (const auto& [i, j] : g.edges)
    if ((g.vertices[i] - g.vertices[j]).norm() > params.r_edge()) ++long_edges;
  CHECK(long_edges == 1);
  // Vertices from both halves survive.
  double lo = kInf, hi = -kInf;
  for (const auto& v : g.vertices) {
    lo = std::min(lo, v[0]);
    hi = std::max(hi, v[0]);
  }
  CHECK(lo < 0.1);
  CHECK(hi > 0.9);
}

TEST_CASE("smooth_and_link decimates duplicates and rejects collapse") {
  auto rng = make_rng(16);
  PointCloud cloud =
      sample_tube(Vec3(0, 0, 0), Vec3(0.1, 0, 0), 0.03, 2000, 0.0, rng);
  std::vector<RosaPoint> rosa;
  for (int i = 0; i < 5; ++i) {
    RosaPoint a;
    a.position = Vec3(0, 0, 0);
    a.source_index = (int)rosa.size();
    rosa.push_back(a);
    RosaPoint b;
    b.position = Vec3(0.1, 0, 0);
    b.source_index = (int)rosa.size();
    rosa.push_back(b);
  }
  SkeletonParams params;
  SkeletonGraph g = smooth_and_link(rosa, cloud, params);
  CHECK(g.vertices.size() == 2);
  CHECK(g.edges.size() == 1);

  std::vector<RosaPoint> single(1);
  CHECK_THROWS_WITH_AS(smooth_and_link(single, cloud, params),
                       "skeleton collapsed", std::invalid_argument);
}

TEST_CASE("extract_skeleton cylinder axis accuracy") {
  SceneParams sp;
  sp.radius = 1.0;
  sp.length = 10.0;
  sp.num_points = 20000;
  sp.noise_sigma = 0.01;
  SyntheticScene scene = synth_scene(SceneKind::Cylinder, sp, 1);
  SkeletonParams params;
  SkeletonGraph g = extract_skeleton(scene.cloud, params);
  REQUIRE(g.vertices.size() >= 5);
  int near = 0;
  for (const auto& v : g.vertices)
    if (scene.truth.axis_distance(v) < 0.15) ++near;
  CHECK(near >= (int)std::ceil(0.95 * g.vertices.size()));
}

TEST_CASE("extract_skeleton y-tube topology") {
  SceneParams sp;
  sp.num_points = 20000;
  SyntheticScene scene = synth_scene(SceneKind::YTube, sp, 1);
  SkeletonParams params;
  SkeletonGraph g = extract_skeleton(scene.cloud, params);
  CHECK(count_degree(g, 3) == 1);
  CHECK(count_degree(g, 1) == 3);
}

TEST_CASE("extract_skeleton torus forms a single cycle") {
  SceneParams sp;
  sp.num_points = 20000;
  SyntheticScene scene = synth_scene(SceneKind::Torus, sp, 1);
  SkeletonParams params;
  SkeletonGraph g = extract_skeleton(scene.cloud, params);
  auto comp = g.components();
  CHECK(*std::max_element(comp.begin(), comp.end()) == 0);
  CHECK(count_degree(g, 2) == (int)g.vertices.size());
  CHECK(g.edges.size() == g.vertices.size());
}

TEST_CASE("extract_skeleton is bit-deterministic") {
  SceneParams sp;
  sp.num_points = 6000;
  SyntheticScene scene = synth_scene(SceneKind::Cylinder, sp, 3);
  SkeletonParams params;
  SkeletonGraph a = extract_skeleton(scene.cloud, params);
  params.workers = 4;
  SkeletonGraph b = extract_skeleton(scene.cloud, params);
  REQUIRE(a.vertices.size() == b.vertices.size());
  for (std::size_t i = 0; i < a.vertices.size(); ++i)
    CHECK(a.vertices[i] == b.vertices[i]);
  CHECK(a.edges == b.edges);
}

TEST_CASE("extract_skeleton vertices stay near the cloud") {
  SceneParams sp;
  sp.num_points = 8000;
  SyntheticScene scene = synth_scene(SceneKind::Cylinder, sp, 5);
  SkeletonParams params;
  SkeletonGraph g = extract_skeleton(scene.cloud, params);
  KdTree tree(scene.cloud.points);
  double r_world = params.r_neigh() / g.transform.scale;
  for (const auto& v : g.vertices) {
    double d = (scene.cloud.points[tree.nearest(v)] - v).norm();
    CHECK(d <= r_world + 1e-9);
  }
}

TEST_CASE("skeleton text export round-trips") {
  SkeletonGraph g;
  g.vertices = {Vec3(0.1234567890123, -2, 3), Vec3(4, 5, 6), Vec3(7, 8, 9)};
  g.edges = {{0, 1}, {1, 2}};
  std::stringstream ss;
  write_skeleton(ss, g);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "skeleton 3 2");
  ss.seekg(0);
  SkeletonGraph h = read_skeleton(ss);
  REQUIRE(h.vertices.size() == 3);
  REQUIRE(h.edges.size() == 2);
  for (int i = 0; i < 3; ++i) CHECK(h.vertices[i] == g.vertices[i]);
  CHECK(h.edges == g.edges);
}
