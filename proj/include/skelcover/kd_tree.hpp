#ifndef SKELCOVER_KD_TREE_HPP
#define SKELCOVER_KD_TREE_HPP

#include "skelcover/types.hpp"

namespace skelcover {

// Exact 3D kd-tree over a fixed point set. Immutable after construction,
// safe for concurrent queries. Ties in distance resolve to the lower
// point index.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(const std::vector<Vec3>& points) { build(points); }

  void build(const std::vector<Vec3>& points);

  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }

  // k nearest neighbors, ordered by (distance, index) ascending.
  std::vector<int> knn(const Vec3& query, int k) const;

  // All indices within radius r (inclusive), ordered by index ascending.
  std::vector<int> radius(const Vec3& query, double r) const;

  int nearest(const Vec3& query) const;

 private:
  struct Node {
    int left = -1;
    int right = -1;
    int point = -1;   // index into pts_
    int axis = 0;
  };

  int build_recursive(std::vector<int>& idx, int begin, int end, int depth);
  void knn_search(int node, const Vec3& q, int k,
                  std::vector<std::pair<double, int>>& heap) const;
  void radius_search(int node, const Vec3& q, double r2,
                     std::vector<int>& out) const;

  std::vector<Vec3> pts_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace skelcover

#endif
