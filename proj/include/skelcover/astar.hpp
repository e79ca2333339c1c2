#ifndef SKELCOVER_ASTAR_HPP
#define SKELCOVER_ASTAR_HPP

#include "skelcover/occupancy_grid.hpp"

namespace skelcover {

struct SafePathResult {
  std::vector<Vec3> waypoints;
  double length = 0.0;
};

struct AstarOptions {
  // Merge consecutive waypoints while line of sight holds.
  bool shortcut = true;
};

// Shortest grid path under 26-connectivity with Euclidean edge costs.
// Traversability comes from the grid's precomputed clearance mask
// (OccupancyGrid::set_clearance), which must be set before calling.
// Throws "endpoint in collision" / "unreachable".
SafePathResult astar_path(const OccupancyGrid& grid, const Vec3& start,
                          const Vec3& goal, const AstarOptions& opts = {});

double path_length(const std::vector<Vec3>& waypoints);

}  // namespace skelcover

#endif
