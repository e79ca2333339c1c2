#ifndef SKELCOVER_DECOMPOSITION_HPP
#define SKELCOVER_DECOMPOSITION_HPP

#include "skelcover/skeleton.hpp"
#include "skelcover/types.hpp"

#include <iosfwd>
#include <utility>
#include <vector>

namespace skelcover {

// Chain of skeleton edges with mutually similar directions. Consecutive
// edges share a vertex; no vertex repeats except the endpoints of a closed
// chain. `reference` is the first edge's direction, fixed at creation.
struct Branch {
  int id = -1;
  std::vector<std::pair<int, int>> edges;  // ordered along the walk
  Vec3 reference{Vec3::Zero()};
};

// Skeleton sample carrying the direction of the edge it lies on.
struct OrientedPoint {
  Vec3 position{Vec3::Zero()};
  Vec3 direction{Vec3::UnitX()};
  int subspace = -1;
};

struct Subspace {
  int id = -1;
  Branch branch;
  std::vector<int> allocated_points;  // indices into the input cloud
  std::vector<int> allocated_planes;  // owning plane per point, into `planes`
  std::vector<OrientedPoint> planes;
  Vec3 centroid_of_viewpoints{Vec3::Zero()};  // filled by the planner
};

// Vertices of degree >= 3, ascending.
std::vector<int> find_joints(const SkeletonGraph& graph);

// Angle between two directions with opposite vectors treated as equal,
// in [0, pi/2].
double undirected_angle(const Vec3& a, const Vec3& b);

// Walks chains from each joint through degree-2 vertices until the next
// joint or leaf, claiming each edge exactly once (lower joint index first);
// components without joints seed at their lowest leaf, or at their lowest
// vertex for a pure cycle. Each chain then splits wherever an edge deviates
// >= delta from the current reference direction, which resets per split.
std::vector<Branch> decompose_branches(const SkeletonGraph& graph,
                                       double delta);

// Samples every `step` along each edge, endpoints included, duplicates at
// shared vertices removed (the earlier edge keeps the shared sample).
std::vector<OrientedPoint> discretize_branch(const SkeletonGraph& graph,
                                             const Branch& branch,
                                             double step);

// Each oriented point captures cloud points within slab_halfwidth of its
// plane and within 3x the local surface distance of itself. Multiply
// captured points go to the nearest oriented point, uncaptured points to
// the globally nearest one; distance ties resolve to the lower subspace
// id. The result partitions the cloud.
std::vector<Subspace> allocate_space(const PointCloud& cloud,
                                     const SkeletonGraph& graph,
                                     const std::vector<Branch>& branches,
                                     double step, double slab_halfwidth,
                                     int workers = 1);

// Per-point subspace ids in input cloud order.
std::vector<int> subspace_labels(const std::vector<Subspace>& subspaces,
                                 std::size_t cloud_size);

// One label per line, input cloud order.
void write_subspace_labels(std::ostream& os, const std::vector<int>& labels);

// Aligned table: id, edge count, point count, reference direction.
void write_branch_summary(std::ostream& os,
                          const std::vector<Subspace>& subspaces);

}  // namespace skelcover

#endif
