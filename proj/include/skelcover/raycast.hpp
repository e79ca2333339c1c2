#ifndef SKELCOVER_RAYCAST_HPP
#define SKELCOVER_RAYCAST_HPP

#include "skelcover/occupancy_grid.hpp"

#include <optional>

namespace skelcover {

struct RaycastResult {
  std::optional<Vec3i> hit;     // first Occupied voxel from `from` toward `to`
  double hit_t = -1.0;          // segment parameter where the hit voxel is entered
  std::vector<Vec3i> traversed; // exact ordered voxel sequence the segment pierces
};

// Step-parameterized grid marching over the segment from->to. Both
// endpoints must be inside grid bounds.
RaycastResult raycast(const OccupancyGrid& grid, const Vec3& from,
                      const Vec3& to);

struct BircStats {
  std::size_t voxels_visited = 0;
};

// Visibility between two points: true iff no Occupied voxel lies strictly
// between them (the endpoints' own voxels never block). Traverses from both
// ends toward the midpoint and stops as soon as either a blocker is found
// or the two frontiers meet.
bool birc_visible(const OccupancyGrid& grid, const Vec3& from, const Vec3& to,
                  BircStats* stats = nullptr);

// Same verdict as birc_visible but via plain unidirectional traversal.
bool unidirectional_visible(const OccupancyGrid& grid, const Vec3& from,
                            const Vec3& to, BircStats* stats = nullptr);

// True iff every voxel pierced by the segment (endpoints included) is
// traversable under the grid's current clearance mask.
bool segment_traversable(const OccupancyGrid& grid, const Vec3& a,
                         const Vec3& b);

}  // namespace skelcover

#endif
