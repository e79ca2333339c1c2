#include "skelcover/raycast.hpp"

#include <cmath>

namespace skelcover {

namespace {

// Incremental Amanatides-Woo walker along the segment from->to.
struct GridWalker {
  Vec3i cur;
  Vec3i goal;
  Vec3i step{Vec3i::Zero()};
  Vec3 tmax{Vec3::Constant(kInf)};
  Vec3 tdelta{Vec3::Constant(kInf)};
  // Segment parameter up to which the walk has covered the ray: every
  // voxel intersecting [0, covered) has been entered.
  double covered = 1.0;

  GridWalker(const OccupancyGrid& grid, const Vec3& from, const Vec3& to) {
    cur = grid.world_to_voxel(from);
    goal = grid.world_to_voxel(to);
    Vec3 d = to - from;
    for (int a = 0; a < 3; ++a) {
      if (d[a] > 0) {
        step[a] = 1;
        double boundary =
            grid.origin()[a] + (cur[a] + 1) * grid.voxel_size();
        tmax[a] = (boundary - from[a]) / d[a];
        tdelta[a] = grid.voxel_size() / d[a];
      } else if (d[a] < 0) {
        step[a] = -1;
        double boundary = grid.origin()[a] + cur[a] * grid.voxel_size();
        tmax[a] = (boundary - from[a]) / d[a];
        tdelta[a] = grid.voxel_size() / -d[a];
      }
      // Per-axis motion is monotone, so an axis that starts in the goal
      // slab never leaves it; pinning it keeps rounding noise from
      // stepping the walk out of the grid.
      if (cur[a] == goal[a]) tmax[a] = kInf;
    }
    covered = at_goal() ? 1.0 : frontier();
  }

  bool at_goal() const { return cur == goal; }

  double frontier() const { return std::min({tmax[0], tmax[1], tmax[2]}); }

  // Move into the next pierced voxel; returns false once the goal voxel
  // has been reached.
  bool advance() {
    if (at_goal()) return false;
    int axis = 0;
    if (tmax[1] < tmax[axis]) axis = 1;
    if (tmax[2] < tmax[axis]) axis = 2;
    cur[axis] += step[axis];
    if (cur[axis] == goal[axis])
      tmax[axis] = kInf;
    else
      tmax[axis] += tdelta[axis];
    covered = at_goal() ? 1.0 : frontier();
    return true;
  }
};

void check_bounds(const OccupancyGrid& grid, const Vec3& from, const Vec3& to) {
  if (!grid.in_bounds_world(from) || !grid.in_bounds_world(to))
    throw std::invalid_argument("out of bounds");
}

}  // namespace

RaycastResult raycast(const OccupancyGrid& grid, const Vec3& from,
                      const Vec3& to) {
  check_bounds(grid, from, to);
  RaycastResult res;
  GridWalker w(grid, from, to);
  double entry_t = 0.0;
  std::size_t guard = (std::size_t)(grid.dims().sum() + 8) * 3;
  while (true) {
    res.traversed.push_back(w.cur);
    if (!res.hit && grid.state(w.cur) == VoxelState::Occupied) {
      res.hit = w.cur;
      res.hit_t = entry_t;
    }
    if (w.at_goal()) break;
    entry_t = w.frontier();
    if (!w.advance() || res.traversed.size() > guard) break;
  }
  return res;
}

bool birc_visible(const OccupancyGrid& grid, const Vec3& from, const Vec3& to,
                  BircStats* stats) {
  check_bounds(grid, from, to);
  if (grid.state(grid.world_to_voxel(from)) == VoxelState::Occupied)
    throw std::invalid_argument("from endpoint in occupied voxel");

  GridWalker fwd(grid, from, to);
  GridWalker bwd(grid, to, from);
  const Vec3i va = fwd.cur;
  const Vec3i vb = bwd.cur;
  std::size_t visited = (va == vb) ? 1 : 2;

  auto blocks = [&](const Vec3i& v) {
    return v != va && v != vb && grid.state(v) == VoxelState::Occupied;
  };

  bool visible = true;
  if (va != vb) {
    // Alternate the two frontiers; each newly entered voxel is checked
    // once. Stop when the covered spans [0,covered_f) and (1-covered_b,1]
    // close over the midpoint.
    bool turn_fwd = true;
    while (fwd.covered + bwd.covered < 1.0) {
      GridWalker& w = turn_fwd ? fwd : bwd;
      GridWalker& other = turn_fwd ? bwd : fwd;
      if (!w.advance()) {
        if (!other.advance()) break;
        ++visited;
        if (blocks(other.cur)) { visible = false; break; }
        continue;
      }
      ++visited;
      if (blocks(w.cur)) { visible = false; break; }
      turn_fwd = !turn_fwd;
    }
  }
  if (stats) stats->voxels_visited = visited;
  return visible;
}

bool unidirectional_visible(const OccupancyGrid& grid, const Vec3& from,
                            const Vec3& to, BircStats* stats) {
  check_bounds(grid, from, to);
  GridWalker w(grid, from, to);
  const Vec3i va = w.cur;
  const Vec3i vb = grid.world_to_voxel(to);
  std::size_t visited = 1;
  bool visible = true;
  while (w.advance()) {
    ++visited;
    if (w.cur != va && w.cur != vb &&
        grid.state(w.cur) == VoxelState::Occupied) {
      visible = false;
      break;
    }
  }
  if (stats) stats->voxels_visited = visited;
  return visible;
}

bool segment_traversable(const OccupancyGrid& grid, const Vec3& a,
                         const Vec3& b) {
  if (!grid.in_bounds_world(a) || !grid.in_bounds_world(b)) return false;
  GridWalker w(grid, a, b);
  if (!grid.traversable(w.cur)) return false;
  while (w.advance())
    if (!grid.traversable(w.cur)) return false;
  return true;
}

}  // namespace skelcover
