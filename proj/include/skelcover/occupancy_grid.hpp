#ifndef SKELCOVER_OCCUPANCY_GRID_HPP
#define SKELCOVER_OCCUPANCY_GRID_HPP

#include "skelcover/types.hpp"

#include <iosfwd>

namespace skelcover {

enum class VoxelState : std::uint8_t { Free = 0, Occupied = 1, Internal = 2 };

// Uniform voxel map. States move Free->Occupied while building and
// Free->Internal while labeling; Occupied voxels are never relabeled.
// Immutable from the planner's point of view once labeling is done;
// concurrent reads are safe.
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(const Vec3& origin, double voxel_size, const Vec3i& dims);

  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const Vec3i& dims() const { return dims_; }
  std::size_t voxel_count() const { return states_.size(); }

  // Floor convention: a point exactly on a boundary belongs to the
  // voxel with the lower index.
  Vec3i world_to_voxel(const Vec3& p) const;
  Vec3 voxel_center(const Vec3i& v) const;

  bool in_bounds(const Vec3i& v) const;
  bool in_bounds_world(const Vec3& p) const;

  std::size_t linear_index(const Vec3i& v) const;
  Vec3i from_linear(std::size_t i) const;

  VoxelState state(const Vec3i& v) const {
    return (VoxelState)states_[linear_index(v)];
  }
  VoxelState state_at(std::size_t i) const { return (VoxelState)states_[i]; }

  void set_occupied(const Vec3i& v);
  // No-op on Occupied voxels.
  void mark_internal(const Vec3i& v);

  std::size_t occupied_count() const;
  std::vector<Vec3i> occupied_voxels() const;

  // Clearance handling: voxels within `clearance` meters (Euclidean,
  // center-to-center) of any Occupied voxel are masked out for motion.
  void set_clearance(double clearance_m);
  double clearance() const { return clearance_m_; }
  bool inflated(const Vec3i& v) const { return inflated_[linear_index(v)]; }
  bool traversable(const Vec3i& v) const {
    std::size_t i = linear_index(v);
    return (VoxelState)states_[i] == VoxelState::Free && !inflated_[i];
  }

  void serialize(std::ostream& os) const;
  static OccupancyGrid deserialize(std::istream& is);

 private:
  Vec3 origin_{Vec3::Zero()};
  double voxel_size_ = 0.0;
  Vec3i dims_{Vec3i::Zero()};
  std::vector<std::uint8_t> states_;
  std::vector<std::uint8_t> inflated_;
  double clearance_m_ = 0.0;
};

// Bounding box of the cloud plus `padding` voxels of Free shell on every
// side. Every voxel containing at least one point becomes Occupied.
OccupancyGrid build_grid(const PointCloud& cloud, double voxel_size,
                         int padding,
                         std::size_t max_voxels = std::size_t(1) << 26);

}  // namespace skelcover

#endif
