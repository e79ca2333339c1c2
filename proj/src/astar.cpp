#include "skelcover/astar.hpp"

#include "skelcover/raycast.hpp"

#include <cmath>
#include <queue>
#include <unordered_map>

namespace skelcover {

namespace {

struct Neighbor {
  Vec3i offset;
  double cost;  // in voxel units
};

const std::vector<Neighbor>& neighbors26() {
  static const std::vector<Neighbor> n = [] {
    std::vector<Neighbor> v;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          v.push_back({Vec3i(dx, dy, dz),
                       std::sqrt(double(dx * dx + dy * dy + dz * dz))});
        }
    return v;
  }();
  return n;
}

std::vector<Vec3> shortcut_waypoints(const OccupancyGrid& grid,
                                     const std::vector<Vec3>& wp) {
  if (wp.size() <= 2) return wp;
  std::vector<Vec3> out;
  out.push_back(wp.front());
  std::size_t i = 0;
  while (i + 1 < wp.size()) {
    std::size_t j = wp.size() - 1;
    for (; j > i + 1; --j)
      if (segment_traversable(grid, wp[i], wp[j])) break;
    out.push_back(wp[j]);
    i = j;
  }
  return out;
}

}  // namespace

double path_length(const std::vector<Vec3>& waypoints) {
  double len = 0.0;
  for (std::size_t i = 1; i < waypoints.size(); ++i)
    len += (waypoints[i] - waypoints[i - 1]).norm();
  return len;
}

SafePathResult astar_path(const OccupancyGrid& grid, const Vec3& start,
                          const Vec3& goal, const AstarOptions& opts) {
  if (!grid.in_bounds_world(start) || !grid.in_bounds_world(goal))
    throw std::invalid_argument("endpoint in collision");
  Vec3i vs = grid.world_to_voxel(start);
  Vec3i vg = grid.world_to_voxel(goal);
  if (!grid.traversable(vs) || !grid.traversable(vg))
    throw std::invalid_argument("endpoint in collision");

  if (start == goal) return {{start}, 0.0};

  std::vector<Vec3i> chain;
  if (vs == vg) {
    chain = {vs};
  } else {
    const double vox = grid.voxel_size();
    const Vec3 goal_center = grid.voxel_center(vg);
    auto heuristic = [&](const Vec3i& v) {
      return (grid.voxel_center(v) - goal_center).norm();
    };

    std::unordered_map<std::size_t, double> g_cost;
    std::unordered_map<std::size_t, std::size_t> parent;
    using Entry = std::pair<double, std::size_t>;  // (f, linear index)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;

    std::size_t is = grid.linear_index(vs);
    std::size_t ig = grid.linear_index(vg);
    g_cost[is] = 0.0;
    open.emplace(heuristic(vs), is);

    bool found = false;
    while (!open.empty()) {
      auto [f, idx] = open.top();
      open.pop();
      if (idx == ig) {
        found = true;
        break;
      }
      Vec3i v = grid.from_linear(idx);
      double g = g_cost[idx];
      if (f > g + heuristic(v) + 1e-12) continue;  // stale entry
      for (const auto& nb : neighbors26()) {
        Vec3i w = v + nb.offset;
        if (!grid.in_bounds(w) || !grid.traversable(w)) continue;
        std::size_t iw = grid.linear_index(w);
        double cand = g + nb.cost * vox;
        auto it = g_cost.find(iw);
        if (it == g_cost.end() || cand < it->second - 1e-15) {
          g_cost[iw] = cand;
          parent[iw] = idx;
          open.emplace(cand + heuristic(w), iw);
        }
      }
    }
    if (!found) throw std::runtime_error("unreachable");

    for (std::size_t cur = ig;;) {
      chain.push_back(grid.from_linear(cur));
      if (cur == is) break;
      cur = parent.at(cur);
    }
    std::reverse(chain.begin(), chain.end());
  }

  std::vector<Vec3> wp;
  wp.push_back(start);
  for (const auto& v : chain) wp.push_back(grid.voxel_center(v));
  wp.push_back(goal);
  // Drop exact duplicates (start/goal sitting on voxel centers).
  std::vector<Vec3> dedup;
  for (const auto& p : wp)
    if (dedup.empty() || (p - dedup.back()).norm() > 0) dedup.push_back(p);

  if (opts.shortcut) dedup = shortcut_waypoints(grid, dedup);
  return {dedup, path_length(dedup)};
}

}  // namespace skelcover
