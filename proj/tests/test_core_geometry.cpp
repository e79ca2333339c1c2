#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "skelcover/astar.hpp"
#include "skelcover/kd_tree.hpp"
#include "skelcover/occupancy_grid.hpp"
#include "skelcover/parallel.hpp"
#include "skelcover/raycast.hpp"
#include "skelcover/rng.hpp"
#include "skelcover/scenes.hpp"

#include <map>
#include <queue>
#include <set>
#include <sstream>

using namespace skelcover;

namespace {

// Independent voxel hashing: floor convention, same-origin keys.
std::size_t brute_occupied_count(const std::vector<Vec3>& pts, double vox,
                                 int padding) {
  Aabb box = bounding_box(pts);
  Vec3 origin = box.lo - Vec3::Constant(padding * vox);
  std::set<std::array<int, 3>> keys;
  for (const auto& p : pts) {
    std::array<int, 3> k;
    for (int a = 0; a < 3; ++a)
      k[a] = (int)std::floor((p[a] - origin[a]) / vox);
    keys.insert(k);
  }
  return keys.size();
}

// Dense step sampling at voxel_size/10; exact for segments that pierce
// every voxel over at least one step length.
std::vector<Vec3i> dense_traverse(const OccupancyGrid& g, const Vec3& a,
                                  const Vec3& b) {
  std::vector<Vec3i> out;
  double len = (b - a).norm();
  int steps = std::max(1, (int)std::ceil(len / (g.voxel_size() / 10.0)));
  for (int i = 0; i <= steps; ++i) {
    Vec3 p = a + (b - a) * (double(i) / steps);
    Vec3i v = g.world_to_voxel(p);
    if (out.empty() || v != out.back()) out.push_back(v);
  }
  return out;
}

// Plain Dijkstra over traversable voxels, 26-connectivity, Euclidean
// center-to-center costs. Returns infinity when unreachable.
double dijkstra_center_cost(const OccupancyGrid& g, const Vec3i& s,
                            const Vec3i& t) {
  std::map<std::size_t, double> dist;
  using E = std::pair<double, std::size_t>;
  std::priority_queue<E, std::vector<E>, std::greater<E>> pq;
  std::size_t is = g.linear_index(s), it = g.linear_index(t);
  dist[is] = 0.0;
  pq.emplace(0.0, is);
  while (!pq.empty()) {
    auto [d, i] = pq.top();
    pq.pop();
    if (d > dist[i] + 1e-15) continue;
    if (i == it) return d;
    Vec3i v = g.from_linear(i);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy && !dz) continue;
          Vec3i w = v + Vec3i(dx, dy, dz);
          if (!g.in_bounds(w) || !g.traversable(w)) continue;
          double nd =
              d + std::sqrt(double(dx * dx + dy * dy + dz * dz)) * g.voxel_size();
          std::size_t iw = g.linear_index(w);
          auto f = dist.find(iw);
          if (f == dist.end() || nd < f->second - 1e-15) {
            dist[iw] = nd;
            pq.emplace(nd, iw);
          }
        }
  }
  return kInf;
}

std::vector<int> brute_knn(const std::vector<Vec3>& pts, const Vec3& q,
                           int k) {
  std::vector<std::pair<double, int>> d;
  for (int i = 0; i < (int)pts.size(); ++i)
    d.push_back({(pts[i] - q).squaredNorm(), i});
  std::sort(d.begin(), d.end());
  std::vector<int> out;
  for (int i = 0; i < k && i < (int)d.size(); ++i) out.push_back(d[i].second);
  return out;
}

std::vector<int> brute_radius(const std::vector<Vec3>& pts, const Vec3& q,
                              double r) {
  std::vector<int> out;
  for (int i = 0; i < (int)pts.size(); ++i)
    if ((pts[i] - q).norm() <= r) out.push_back(i);
  return out;
}

OccupancyGrid random_grid(std::mt19937_64& rng, double occupied_prob) {
  std::uniform_int_distribution<int> dim(4, 14);
  Vec3i dims(dim(rng), dim(rng), dim(rng));
  OccupancyGrid g(Vec3(-1, -2, 0.5), 0.5, dims);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int z = 0; z < dims[2]; ++z)
    for (int y = 0; y < dims[1]; ++y)
      for (int x = 0; x < dims[0]; ++x)
        if (uni(rng) < occupied_prob) g.set_occupied(Vec3i(x, y, z));
  return g;
}

Vec3 random_point_in(const OccupancyGrid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vec3 span = g.dims().cast<double>() * g.voxel_size();
  Vec3 p;
  for (int a = 0; a < 3; ++a)
    p[a] = g.origin()[a] + uni(rng) * span[a] * 0.999;
  return p;
}

}  // namespace

TEST_CASE("build_grid single point") {
  PointCloud c;
  c.points.push_back(Vec3(0, 0, 0));
  OccupancyGrid g = build_grid(c, 1.0, 1);
  CHECK(g.dims() == Vec3i(3, 3, 3));
  CHECK(g.occupied_count() == 1);
  CHECK(g.state(Vec3i(1, 1, 1)) == VoxelState::Occupied);
}

TEST_CASE("build_grid two points, padding 2") {
  PointCloud c;
  c.points.push_back(Vec3(0, 0, 0));
  c.points.push_back(Vec3(10, 0, 0));
  OccupancyGrid g = build_grid(c, 1.0, 2);
  // Hand count: bounding extent 10 -> 11 cells, plus 2 padding per side.
  CHECK(g.dims()[0] == 15);
  CHECK(g.dims()[1] == 5);
  CHECK(g.dims()[2] == 5);
  CHECK(g.occupied_count() == 2);
}

TEST_CASE("build_grid cylinder matches independent voxel hashing") {
  auto rng = make_rng(11);
  PointCloud c = sample_tube(Vec3(-5, 0, 0), Vec3(5, 0, 0), 1.0, 20000, 0.0,
                             rng);
  OccupancyGrid g = build_grid(c, 0.2, 1);
  CHECK(g.occupied_count() == brute_occupied_count(c.points, 0.2, 1));
}

TEST_CASE("build_grid errors") {
  PointCloud empty;
  CHECK_THROWS_WITH_AS(build_grid(empty, 1.0, 1), "empty input",
                       std::invalid_argument);
  PointCloud c;
  c.points.push_back(Vec3(0, 0, 0));
  c.points.push_back(Vec3(1000, 1000, 1000));
  CHECK_THROWS_WITH_AS(build_grid(c, 0.01, 1, 1000), "grid too large",
                       std::invalid_argument);
}

TEST_CASE("build_grid permutation invariant") {
  auto rng = make_rng(7);
  PointCloud c = sample_tube(Vec3(0, 0, 0), Vec3(0, 0, 4), 0.8, 500, 0.0, rng);
  OccupancyGrid a = build_grid(c, 0.3, 1);
  std::shuffle(c.points.begin(), c.points.end(), rng);
  OccupancyGrid b = build_grid(c, 0.3, 1);
  REQUIRE(a.dims() == b.dims());
  CHECK(a.origin() == b.origin());
  for (std::size_t i = 0; i < a.voxel_count(); ++i)
    REQUIRE(a.state_at(i) == b.state_at(i));
}

TEST_CASE("grid state transitions and indexing") {
  OccupancyGrid g(Vec3(0, 0, 0), 1.0, Vec3i(4, 4, 4));
  g.set_occupied(Vec3i(2, 2, 2));
  g.mark_internal(Vec3i(2, 2, 2));
  CHECK(g.state(Vec3i(2, 2, 2)) == VoxelState::Occupied);  // never relabeled
  g.mark_internal(Vec3i(1, 1, 1));
  CHECK(g.state(Vec3i(1, 1, 1)) == VoxelState::Internal);
  CHECK_THROWS_AS(g.linear_index(Vec3i(4, 0, 0)), std::out_of_range);
  // Boundary point belongs to the floor-side voxel.
  CHECK(g.world_to_voxel(Vec3(2.0, 0.5, 0.5)) == Vec3i(2, 0, 0));
}

TEST_CASE("grid serialize round-trip") {
  auto rng = make_rng(3);
  OccupancyGrid g = random_grid(rng, 0.3);
  g.mark_internal(Vec3i(0, 0, 0));
  std::stringstream ss;
  g.serialize(ss);
  OccupancyGrid h = OccupancyGrid::deserialize(ss);
  CHECK(h.origin() == g.origin());
  CHECK(h.voxel_size() == g.voxel_size());
  REQUIRE(h.dims() == g.dims());
  for (std::size_t i = 0; i < g.voxel_count(); ++i)
    REQUIRE(h.state_at(i) == g.state_at(i));
}

TEST_CASE("raycast degenerate and free cases") {
  OccupancyGrid g(Vec3(0, 0, 0), 1.0, Vec3i(5, 5, 5));
  Vec3 p(2.5, 2.5, 2.5);
  auto r = raycast(g, p, p);
  CHECK(!r.hit);
  REQUIRE(r.traversed.size() == 1);
  CHECK(r.traversed[0] == Vec3i(2, 2, 2));

  auto r2 = raycast(g, Vec3(0.5, 0.5, 0.5), Vec3(4.5, 4.2, 3.7));
  CHECK(!r2.hit);

  CHECK_THROWS_WITH_AS(raycast(g, Vec3(-1, 0, 0), p), "out of bounds",
                       std::invalid_argument);
}

TEST_CASE("raycast hits midpoint obstacle; traversal matches dense oracle") {
  OccupancyGrid g(Vec3(0, 0, 0), 1.0, Vec3i(9, 3, 3));
  g.set_occupied(Vec3i(4, 1, 1));
  Vec3 a(0.5, 1.5, 1.5), b(8.5, 1.5, 1.5);
  auto r = raycast(g, a, b);
  REQUIRE(r.hit.has_value());
  CHECK(*r.hit == Vec3i(4, 1, 1));
  auto oracle = dense_traverse(g, a, b);
  REQUIRE(r.traversed.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i)
    CHECK(r.traversed[i] == oracle[i]);
}

TEST_CASE("raycast traversal structure on random segments") {
  auto rng = make_rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    OccupancyGrid g = random_grid(rng, 0.15);
    Vec3 a = random_point_in(g, rng), b = random_point_in(g, rng);
    auto r = raycast(g, a, b);
    REQUIRE(!r.traversed.empty());
    CHECK(r.traversed.front() == g.world_to_voxel(a));
    CHECK(r.traversed.back() == g.world_to_voxel(b));
    for (std::size_t i = 1; i < r.traversed.size(); ++i) {
      Vec3i d = r.traversed[i] - r.traversed[i - 1];
      CHECK(d.cwiseAbs().sum() == 1);  // one axis per step
    }
    // Dense samples never land outside the traversed set.
    std::set<std::array<int, 3>> seen;
    for (const auto& v : r.traversed) seen.insert({v[0], v[1], v[2]});
    for (const auto& v : dense_traverse(g, a, b))
      CHECK(seen.count({v[0], v[1], v[2]}) == 1);
  }
}

TEST_CASE("birc_visible basic cases") {
  OccupancyGrid g(Vec3(0, 0, 0), 1.0, Vec3i(32, 3, 3));
  Vec3 a(0.5, 1.5, 1.5), b(31.5, 1.5, 1.5);
  CHECK(birc_visible(g, a, b));

  g.set_occupied(Vec3i(30, 1, 1));  // adjacent to `to`
  BircStats bi, uni;
  CHECK(!birc_visible(g, a, b, &bi));
  CHECK(!unidirectional_visible(g, a, b, &uni));
  CHECK(bi.voxels_visited * 2 <= uni.voxels_visited);
}

TEST_CASE("birc_visible agrees with unidirectional on random pairs") {
  auto rng = make_rng(42);
  int done = 0;
  while (done < 10000) {
    OccupancyGrid g = random_grid(rng, 0.2);
    for (int i = 0; i < 50 && done < 10000; ++i) {
      Vec3 a = random_point_in(g, rng), b = random_point_in(g, rng);
      if (g.state(g.world_to_voxel(a)) == VoxelState::Occupied) continue;
      if (g.state(g.world_to_voxel(b)) == VoxelState::Occupied) continue;
      bool bv = birc_visible(g, a, b);
      REQUIRE(bv == unidirectional_visible(g, a, b));
      REQUIRE(bv == birc_visible(g, b, a));
      ++done;
    }
  }
}

TEST_CASE("astar trivial cases") {
  OccupancyGrid g(Vec3(0, 0, 0), 1.0, Vec3i(8, 8, 3));
  g.set_clearance(0.0);
  Vec3 s(1.2, 1.3, 1.5);
  auto r = astar_path(g, s, s);
  CHECK(r.length == 0.0);
  REQUIRE(r.waypoints.size() == 1);
  CHECK(r.waypoints[0] == s);

  Vec3 t(6.7, 6.1, 1.5);
  auto r2 = astar_path(g, s, t);
  CHECK(r2.length == doctest::Approx((t - s).norm()).epsilon(1e-12));
  CHECK(r2.waypoints.size() == 2);
}

TEST_CASE("astar wall with gap matches Dijkstra oracle") {
  OccupancyGrid g(Vec3(0, 0, 0), 0.5, Vec3i(15, 11, 7));
  for (int y = 0; y < 11; ++y)
    for (int z = 0; z < 7; ++z)
      if (!(y == 5 && z == 3)) g.set_occupied(Vec3i(7, y, z));
  g.set_clearance(0.0);
  Vec3 s = g.voxel_center(Vec3i(2, 5, 3));
  Vec3 t = g.voxel_center(Vec3i(12, 5, 3));
  auto raw = astar_path(g, s, t, {.shortcut = false});
  double oracle = dijkstra_center_cost(g, Vec3i(2, 5, 3), Vec3i(12, 5, 3));
  CHECK(raw.length == doctest::Approx(oracle).epsilon(1e-9));

  auto cut = astar_path(g, s, t);
  CHECK(cut.length <= raw.length + 1e-12);
  CHECK(cut.length >= (t - s).norm() - 1e-12);
  // Waypoints must stay traversable along the whole polyline.
  for (std::size_t i = 1; i < cut.waypoints.size(); ++i)
    CHECK(segment_traversable(g, cut.waypoints[i - 1], cut.waypoints[i]));
}

TEST_CASE("astar respects clearance margin") {
  OccupancyGrid g(Vec3(0, 0, 0), 0.5, Vec3i(15, 11, 7));
  for (int y = 0; y < 11; ++y)
    for (int z = 0; z < 7; ++z)
      if (!(y == 5 && z == 3)) g.set_occupied(Vec3i(7, y, z));
  g.set_clearance(0.5);  // one voxel: plugs the single-voxel gap
  Vec3 s = g.voxel_center(Vec3i(2, 5, 3));
  Vec3 t = g.voxel_center(Vec3i(12, 5, 3));
  CHECK_THROWS_WITH_AS(astar_path(g, s, t), "unreachable", std::runtime_error);

  g.set_clearance(0.0);
  CHECK_THROWS_WITH_AS(
      astar_path(g, g.voxel_center(Vec3i(7, 0, 0)), t),
      "endpoint in collision", std::invalid_argument);
}

TEST_CASE("astar length invariants on random grids") {
  auto rng = make_rng(99);
  int done = 0;
  while (done < 40) {
    OccupancyGrid g = random_grid(rng, 0.1);
    g.set_clearance(0.0);
    Vec3 s = random_point_in(g, rng), t = random_point_in(g, rng);
    if (!g.traversable(g.world_to_voxel(s)) ||
        !g.traversable(g.world_to_voxel(t)))
      continue;
    SafePathResult raw, cut;
    try {
      raw = astar_path(g, s, t, {.shortcut = false});
      cut = astar_path(g, s, t);
    } catch (const std::runtime_error&) {
      continue;  // unreachable pair
    }
    CHECK(cut.length <= raw.length + 1e-12);
    CHECK(raw.length >= (t - s).norm() - 1e-12);
    CHECK(cut.length >= (t - s).norm() - 1e-12);
    double sum = path_length(cut.waypoints);
    CHECK(cut.length == doctest::Approx(sum).epsilon(1e-9));
    ++done;
  }
}

TEST_CASE("kd-tree frozen examples") {
  std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  KdTree tree(pts);
  CHECK(tree.nearest(Vec3(1, 0, 0)) == 1);
  auto two = tree.knn(Vec3(0.9, 0, 0), 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == 1);
  CHECK(two[1] == 0);
  CHECK(tree.radius(Vec3(0.4, 0, 0), 0.3).empty());
}

TEST_CASE("kd-tree tie-break by lower index") {
  std::vector<Vec3> pts = {Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0)};
  KdTree tree(pts);
  auto nn = tree.knn(Vec3(0, 0, 0), 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0] == 0);
  CHECK(nn[1] == 1);
  CHECK(nn[2] == 2);
}

TEST_CASE("kd-tree matches brute force on 1000 random queries") {
  auto rng = make_rng(5);
  std::uniform_real_distribution<double> uni(-4.0, 4.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i)
    pts.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
  KdTree tree(pts);
  std::uniform_int_distribution<int> kd(1, 10);
  std::uniform_real_distribution<double> rd(0.1, 3.0);
  for (int q = 0; q < 1000; ++q) {
    Vec3 query(uni(rng), uni(rng), uni(rng));
    int k = kd(rng);
    double r = rd(rng);
    REQUIRE(tree.knn(query, k) == brute_knn(pts, query, k));
    REQUIRE(tree.radius(query, r) == brute_radius(pts, query, r));
  }
}

TEST_CASE("kd-tree errors") {
  KdTree empty;
  CHECK_THROWS_WITH_AS(empty.knn(Vec3(0, 0, 0), 1), "empty input",
                       std::invalid_argument);
  std::vector<Vec3> pts = {Vec3(0, 0, 0)};
  KdTree t(pts);
  CHECK_THROWS_AS(t.knn(Vec3(0, 0, 0), 0), std::invalid_argument);
  CHECK_THROWS_AS(t.radius(Vec3(0, 0, 0), 0.0), std::invalid_argument);
}

TEST_CASE("parallel_for is worker-count independent") {
  std::vector<double> a(1000), b(1000), c(1000);
  auto fill = [](std::vector<double>& v) {
    return [&v](std::size_t i) {
      v[i] = std::sin(0.1 * double(i)) * double(i % 17);
    };
  };
  parallel_for(1000, 1, fill(a));
  parallel_for(1000, 4, fill(b));
  parallel_for(1000, 8, fill(c));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("seed mixing is deterministic and salt-sensitive") {
  CHECK(mix_seed(1, 0) == mix_seed(1, 0));
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
}
