#ifndef SKELCOVER_VIEWPOINTS_HPP
#define SKELCOVER_VIEWPOINTS_HPP

#include "skelcover/decomposition.hpp"
#include "skelcover/kd_tree.hpp"
#include "skelcover/occupancy_grid.hpp"

#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

namespace skelcover {

struct SensorModel {
  double fov_h = deg2rad(75.0);
  double fov_w = deg2rad(55.0);
  double d_v = 4.0;
  double gimbal_min = deg2rad(-90.0);
  double gimbal_max = deg2rad(70.0);

  void validate() const;
};

// Maximal distance at which a voxel can sit centered in the narrow FoV
// axis: d_v * tan(min(fov)/2).
double query_radius(const SensorModel& sensor);

enum class VpState : std::uint8_t { Active = 0, Dormant = 1 };

struct Viewpoint {
  Vec3 position{Vec3::Zero()};
  double pitch = 0.0;
  double yaw = 0.0;
  int subspace = -1;
  std::vector<std::size_t> covered;  // voxel linear indices, ascending
  VpState state = VpState::Active;
};

// Outward continuation of a skeleton-to-surface ray beyond the surface.
struct SamplingRay {
  Vec3 sr{Vec3::Zero()};   // surface crossing point
  Vec3 dr{Vec3::UnitX()};  // unit outward direction
  int subspace = -1;
  Vec3i voxel{Vec3i::Zero()};  // the Occupied voxel crossed at sr
};

struct InternalLabelResult {
  std::vector<SamplingRay> rays;
  std::size_t internal_count = 0;
  int no_hit_rays = 0;      // segment left the grid or hit nothing
  int degenerate_rays = 0;  // zero-length skeleton-to-point segment
};

// Casts one ray per (owning oriented point, allocated point) pair, marks
// every voxel before the first Occupied crossing as Internal, and emits
// the outward ray continuing at the crossing. `cloud` must be the cloud
// the subspaces were allocated from.
InternalLabelResult label_internal_and_rays(
    OccupancyGrid& grid, const PointCloud& cloud,
    const std::vector<Subspace>& subspaces, int workers = 1);

// Keeps the first ray per crossed Occupied voxel; order-preserving.
std::vector<SamplingRay> dedupe_rays(const OccupancyGrid& grid,
                                     const std::vector<SamplingRay>& rays);

// Pitch/yaw of the pose that looks back along -dr, and its inverse (the
// unit view direction of a pose).
std::pair<double, double> view_angles(const Vec3& dr);
Vec3 view_direction(double pitch, double yaw);

struct SampleStats {
  int discarded = 0;
  int pulled_back = 0;
  int pitch_clamped = 0;
};

// One viewpoint at distance D along the ray, looking back at the surface.
// Rays steeper than the gimbal allows are tilted to the gimbal envelope
// first; invalid positions are pulled back toward the surface in
// half-voxel steps up to D/2 before the sample is discarded.
std::optional<Viewpoint> sample_viewpoint(const SamplingRay& ray, double D,
                                          const OccupancyGrid& grid,
                                          const SensorModel& sensor,
                                          SampleStats* stats = nullptr);

std::vector<Viewpoint> sample_initial_viewpoints(
    const std::vector<SamplingRay>& rays, double D, const OccupancyGrid& grid,
    const SensorModel& sensor, SampleStats* stats = nullptr);

// Occupied-voxel index shared by all coverage queries against one grid.
struct CoverageContext {
  std::vector<Vec3> centers;
  std::vector<std::size_t> linear;
  KdTree tree;

  explicit CoverageContext(const OccupancyGrid& grid);
};

// Occupied voxels whose centers are within d_v, inside the rectangular
// FoV cone, and visible from the viewpoint; ascending linear indices.
std::vector<std::size_t> coverage_set(const Viewpoint& vp,
                                      const OccupancyGrid& grid,
                                      const SensorModel& sensor,
                                      const CoverageContext& ctx);
std::vector<std::size_t> coverage_set(const Viewpoint& vp,
                                      const OccupancyGrid& grid,
                                      const SensorModel& sensor);

struct VoxelAssignment {
  std::unordered_map<std::size_t, int> owner;  // voxel -> input index
  std::vector<int> kept;                       // inputs owning >= 1 voxel
};

// Each multiply-observed voxel goes to the observer with the largest
// coverage set (ties to the lower index); inputs owning nothing are
// dropped from `kept`.
VoxelAssignment assign_voxels(const std::vector<Viewpoint>& viewpoints);

struct GravitateResult {
  Viewpoint updated;
  std::vector<int> absorbed;  // indices into the neighbor list
};

// Gravitation-like pull of vp_q toward neighbors with smaller coverage,
// angular analogs via shortest signed differences, FoV re-centering on the
// covered-voxel centroid, and position revalidation (pull back toward the
// previous valid position, capped at D/2 of travel).
GravitateResult gravitate_update(const Viewpoint& vp_q,
                                 const std::vector<Viewpoint>& neighbors,
                                 const OccupancyGrid& grid,
                                 const SensorModel& sensor, double D);

// Occupied voxels observable from at least one valid pose at distance D
// (fixed icosphere of candidate directions, gimbal-feasible, visible);
// ascending linear indices. The honest coverage-rate denominator.
std::vector<std::size_t> coverable_voxels(const OccupancyGrid& grid,
                                          const SensorModel& sensor,
                                          double D);

struct ViewpointGenParams {
  double D = -1.0;  // <= 0 selects 0.8 * d_v
  int max_rounds = 5;
  int workers = 1;
};

struct RoundStats {
  int sampled = 0;
  int active_before = 0;
  int active_after_assign = 0;
  int active_after_merge = 0;
  std::size_t uncovered = 0;
};

struct ViewpointGenResult {
  std::vector<Viewpoint> viewpoints;  // final Active set, ids reassigned
  std::vector<std::vector<int>> by_subspace;
  int vp_ini_count = 0;
  std::size_t coverable_count = 0;
  std::size_t covered_count = 0;  // recomputed from scratch at the end
  std::size_t residual_uncovered = 0;
  int rounds_used = 0;
  bool exhausted = false;  // max_rounds hit with coverable voxels uncovered
  int discarded_samples = 0;
  std::vector<RoundStats> rounds;

  double coverage_rate() const {
    return coverable_count == 0
               ? 1.0
               : double(covered_count) / double(coverable_count);
  }
};

// Full iterative loop: sample, assign, gravitate, resample the uncovered
// residue, and reassign ids by the nearest initial sample.
ViewpointGenResult generate_viewpoints(const OccupancyGrid& grid,
                                       const std::vector<SamplingRay>& rays,
                                       const SensorModel& sensor,
                                       const ViewpointGenParams& params);

// CSV: id,x,y,z,pitch_rad,yaw_rad,subspace,covered_count.
void write_viewpoints_csv(std::ostream& os,
                          const std::vector<Viewpoint>& viewpoints);

}  // namespace skelcover

#endif
