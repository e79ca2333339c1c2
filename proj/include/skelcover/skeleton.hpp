#ifndef SKELCOVER_SKELETON_HPP
#define SKELCOVER_SKELETON_HPP

#include "skelcover/kd_tree.hpp"
#include "skelcover/types.hpp"

#include <iosfwd>
#include <utility>

namespace skelcover {

// Unit-sphere normalization: normalized = (world - center) * scale,
// with scale = 1 / max distance from the centroid.
struct NormalizeTransform {
  Vec3 center{Vec3::Zero()};
  double scale = 1.0;

  Vec3 to_normalized(const Vec3& p) const { return (p - center) * scale; }
  Vec3 to_world(const Vec3& q) const { return q / scale + center; }
};

std::pair<PointCloud, NormalizeTransform> normalize_cloud(
    const PointCloud& cloud);

// Least-variance principal direction of each point's k-NN neighborhood,
// sign pointing away from the local centroid.
PointCloud estimate_normals(const PointCloud& cloud, int k);

// One centroid (and averaged normal) per occupied leaf cell; output
// ordered by lexicographic cell key.
PointCloud downsample(const PointCloud& cloud, double leaf);

struct SkeletonParams {
  int normal_k = 16;
  double leaf = 0.05;  // normalized frame
  double slab_factor = 0.5;
  double neigh_factor = 5.0;
  double mls_factor = 3.0;
  double link_factor = 1.5;
  double edge_factor = 3.0;
  double bridge_factor = 10.0;
  int max_iters = 20;
  double tol_rad = deg2rad(0.1);
  int workers = 1;

  double r_slab() const { return slab_factor * leaf; }
  double r_neigh() const { return neigh_factor * leaf; }
  double r_mls() const { return mls_factor * leaf; }
  double r_link() const { return link_factor * leaf; }
  double r_edge() const { return edge_factor * leaf; }
  double r_bridge() const { return bridge_factor * leaf; }
};

struct RosaPoint {
  Vec3 position{Vec3::Zero()};
  Vec3 orientation{Vec3::UnitZ()};
  int source_index = -1;
  bool flagged = false;     // any fallback used
  bool degenerate = false;  // unusable neighborhood; dropped before linking
};

// Points within r_neigh of p and within r_slab of the plane through p
// with normal v. Always contains p itself.
std::vector<int> slab_neighborhood(const PointCloud& cloud,
                                   const KdTree& tree, int idx, const Vec3& v,
                                   double r_neigh, double r_slab);

Eigen::Matrix3d normal_second_moment(const PointCloud& cloud,
                                     const std::vector<int>& indices);

// Iterated smallest eigenvector of the slab-neighborhood normal moment
// matrix; sign fixed so the first nonzero component is positive.
Vec3 rosa_orientation(const PointCloud& cloud, const KdTree& tree, int idx,
                      const Vec3& v0, const SkeletonParams& params,
                      bool* flagged = nullptr, int* iters_out = nullptr);

// Closed-form least-squares intersection of the neighborhood normal
// lines. Parallel-normal fallback projects the centroid onto the common
// normal line through the point.
Vec3 rosa_position(const PointCloud& cloud,
                   const std::vector<int>& neighborhood, int idx,
                   bool* flagged = nullptr);

std::vector<RosaPoint> compute_rosa_points(const PointCloud& downsampled,
                                           const SkeletonParams& params);

struct SkeletonGraph {
  std::vector<Vec3> vertices;
  std::vector<std::pair<int, int>> edges;  // i<j, sorted, unique
  NormalizeTransform transform;

  std::vector<std::vector<int>> adjacency() const;
  std::vector<int> degrees() const;
  std::vector<int> components() const;  // per-vertex component id
};

// MLS recentering, decimation, support-checked linking, bridging of
// fragments that share an input component, then largest-structure
// selection per input component. Operates in the normalized frame.
SkeletonGraph smooth_and_link(const std::vector<RosaPoint>& rosa_points,
                              const PointCloud& cloud,
                              const SkeletonParams& params);

// Full pipeline; output vertices in world frame.
SkeletonGraph extract_skeleton(const PointCloud& cloud,
                               const SkeletonParams& params);

void write_skeleton(std::ostream& os, const SkeletonGraph& g);
SkeletonGraph read_skeleton(std::istream& is);

}  // namespace skelcover

#endif
