#pragma once

#include "skelcover/astar.hpp"
#include "skelcover/decomposition.hpp"
#include "skelcover/skeleton.hpp"
#include "skelcover/tsp.hpp"
#include "skelcover/viewpoints.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <unordered_map>
#include <utility>
#include <vector>

namespace skelcover {

// Kinodynamic limits shared by path costing and trajectory generation.
struct DynamicLimits {
  double v_max = 2.0;
  double omega_max = 1.0;
  double a_max = 1.0;
  double j_max = 0.5;

  void validate() const;
};

// Time-metric cost between two viewpoints given a collision-free length.
double traversal_cost(const Viewpoint& a, const Viewpoint& b, double length,
                      const DynamicLimits& limits);

// Memo of collision-free path lengths keyed by exact endpoint coordinates.
// Lengths are symmetric; entries are valid for one grid/clearance setting.
class PathCache {
 public:
  // Cached collision-free length; kInf when no path exists.
  double length(const OccupancyGrid& grid, const Vec3& a, const Vec3& b);
  void put(const Vec3& a, const Vec3& b, double len);
  void merge(const PathCache& other);
  std::size_t size() const { return count_; }

 private:
  using Key = std::array<double, 6>;
  std::vector<std::pair<Key, double>>& bucket(const Vec3& a, const Vec3& b, Key& key);

  std::unordered_map<std::uint64_t, std::vector<std::pair<Key, double>>> lengths_;
  std::size_t count_ = 0;
};

// Ordered coverage path. legs[i] connects viewpoints[i-1] (or start_pose for
// i == 0) to viewpoints[i]; total_length sums leg lengths, total_cost sums
// time-metric leg costs.
struct CoveragePath {
  Vec3 start_pose = Vec3::Zero();
  std::vector<Viewpoint> viewpoints;
  std::vector<SafePathResult> legs;
  double total_length = 0.0;
  double total_cost = 0.0;
};

// Boundary viewpoints of one subspace; indices refer to the global viewpoint
// vector. end is -1 for the final subspace of the sequence.
struct Boundary {
  int start = -1;
  int end = -1;
};

// Mean viewpoint position per subspace id; zero vector where a subspace has
// no viewpoints.
std::vector<Vec3> subspace_centroids(const std::vector<Viewpoint>& viewpoints,
                                     const std::vector<std::vector<int>>& by_subspace);

// Visit order over the subspace ids listed in by_subspace (empty ones are
// rejected). Solved as a closed tour over the current pose plus centroids
// with the return column zeroed, so the pose anchors the start and the tour
// end is free.
std::vector<int> global_sequence(const std::vector<Viewpoint>& viewpoints,
                                 const std::vector<std::vector<int>>& by_subspace,
                                 const Vec3& current_pose, std::uint64_t seed = 0);

// Start/end viewpoints per sequence entry, chosen against the neighbouring
// centroids. centroid_seq holds the current pose followed by one centroid
// per sequence entry, in sequence order. When start and end coincide in a
// subspace with two or more viewpoints the end falls back to its
// second-best candidate; the final subspace gets no end.
std::vector<Boundary> select_boundaries(const std::vector<Viewpoint>& viewpoints,
                                        const std::vector<std::vector<int>>& by_subspace,
                                        const std::vector<int>& sequence,
                                        const std::vector<Vec3>& centroid_seq);

// Local cost matrix over an ordered viewpoint list with the start at index 0
// and, unless last_subspace, the end at index R-1. Time-metric costs use
// collision-free lengths from the grid; column 0 is zero and row R-1 is
// infinite except for the final subspace, whose end is left free.
CostMatrix local_cost_matrix(const std::vector<Viewpoint>& ordered,
                             const OccupancyGrid& grid, const DynamicLimits& limits,
                             bool last_subspace = false, PathCache* cache = nullptr);

// Per-subspace visit orders (global viewpoint indices), solved independently
// and concurrently; results do not depend on the worker count. caches, when
// given, receives one PathCache per sequence entry.
std::vector<std::vector<int>> plan_local_paths(
    const std::vector<Viewpoint>& viewpoints,
    const std::vector<std::vector<int>>& by_subspace, const std::vector<int>& sequence,
    const std::vector<Boundary>& boundaries, const OccupancyGrid& grid,
    const DynamicLimits& limits, std::uint64_t seed = 0, int workers = 1,
    std::vector<PathCache>* caches = nullptr);

// Concatenates the local orders along the sequence, prepends the current
// pose, and recomputes every connecting safe path.
CoveragePath assemble(const std::vector<Viewpoint>& viewpoints,
                      const std::vector<int>& sequence,
                      const std::vector<std::vector<int>>& local_orders,
                      const Vec3& current_pose, const OccupancyGrid& grid,
                      const DynamicLimits& limits, PathCache* cache = nullptr);

// Random-restart 2-opt refinement around skeleton junctions. Iterations are
// distributed round-robin over the junction vertices; only strict cost
// decreases are accepted, and the first and last viewpoints stay in place.
CoveragePath refine_path(const CoveragePath& path, const SkeletonGraph& graph,
                         const std::vector<Branch>& branches, double r_jc,
                         int iterations, std::uint64_t seed, const OccupancyGrid& grid,
                         const DynamicLimits& limits, PathCache* cache = nullptr);

struct PlanParams {
  Vec3 current_pose = Vec3::Zero();
  DynamicLimits limits;
  double r_jc = -1.0;  // <= 0 derives 2 * query_radius(sensor)
  int refine_iterations = 10000;
  std::uint64_t seed = 0;
  int workers = 1;
};

struct PlanDiagnostics {
  double sequence_ms = 0.0;
  double boundary_ms = 0.0;
  double local_ms = 0.0;
  double assemble_ms = 0.0;
  double refine_ms = 0.0;
  std::vector<int> sequence;
  std::vector<int> viewpoints_per_subspace;  // aligned with sequence
  double cost_before_refine = 0.0;
  double cost_after_refine = 0.0;
  double length_before_refine = 0.0;
  double length_after_refine = 0.0;
};

struct PlanResult {
  CoveragePath path;
  PlanDiagnostics diagnostics;
};

// Full hierarchical plan: global sequence, boundaries, concurrent local
// orders, assembly, refinement. Fills centroid_of_viewpoints on subspaces
// that own viewpoints. The grid must already have its clearance mask set.
PlanResult plan(const OccupancyGrid& grid, const SkeletonGraph& graph,
                const std::vector<Branch>& branches, std::vector<Subspace>& subspaces,
                const ViewpointGenResult& gen, const SensorModel& sensor,
                const PlanParams& params);

// Ablation path: one flat tour over all viewpoints, starting at the one
// nearest the current pose, end free.
CoveragePath global_only_path(const std::vector<Viewpoint>& viewpoints,
                              const Vec3& current_pose, const OccupancyGrid& grid,
                              const DynamicLimits& limits, std::uint64_t seed = 0);

// index,x,y,z,pitch,yaw,subspace per visited viewpoint.
void write_path_csv(std::ostream& os, const CoveragePath& path);

// Polyline through every leg waypoint: "path N" header then v-lines.
void write_path_polyline(std::ostream& os, const CoveragePath& path);

// Stage timings, per-subspace counts, and pre/post refinement costs as JSON.
void write_plan_diagnostics(std::ostream& os, const PlanDiagnostics& diag);

}  // namespace skelcover
