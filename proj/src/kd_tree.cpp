#include "skelcover/kd_tree.hpp"

#include <algorithm>
#include <numeric>

namespace skelcover {

void KdTree::build(const std::vector<Vec3>& points) {
  pts_ = points;
  nodes_.clear();
  nodes_.reserve(points.size());
  std::vector<int> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  root_ = pts_.empty() ? -1 : build_recursive(idx, 0, (int)idx.size(), 0);
}

int KdTree::build_recursive(std::vector<int>& idx, int begin, int end,
                            int depth) {
  if (begin >= end) return -1;
  int axis = depth % 3;
  int mid = begin + (end - begin) / 2;
  std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end,
                   [&](int a, int b) {
                     if (pts_[a][axis] != pts_[b][axis])
                       return pts_[a][axis] < pts_[b][axis];
                     return a < b;
                   });
  Node n;
  n.point = idx[mid];
  n.axis = axis;
  int self = (int)nodes_.size();
  nodes_.push_back(n);
  int left = build_recursive(idx, begin, mid, depth + 1);
  int right = build_recursive(idx, mid + 1, end, depth + 1);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree::knn_search(int node, const Vec3& q, int k,
                        std::vector<std::pair<double, int>>& heap) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = pts_[n.point];
  double d2 = (p - q).squaredNorm();
  std::pair<double, int> cand{d2, n.point};
  if ((int)heap.size() < k) {
    heap.push_back(cand);
    std::push_heap(heap.begin(), heap.end());
  } else if (cand < heap.front()) {
    std::pop_heap(heap.begin(), heap.end());
    heap.back() = cand;
    std::push_heap(heap.begin(), heap.end());
  }
  double diff = q[n.axis] - p[n.axis];
  int near = diff <= 0 ? n.left : n.right;
  int far = diff <= 0 ? n.right : n.left;
  knn_search(near, q, k, heap);
  if ((int)heap.size() < k || diff * diff <= heap.front().first)
    knn_search(far, q, k, heap);
}

std::vector<int> KdTree::knn(const Vec3& query, int k) const {
  if (pts_.empty()) throw std::invalid_argument("empty input");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  std::vector<std::pair<double, int>> heap;
  heap.reserve(k + 1);
  knn_search(root_, query, k, heap);
  std::sort(heap.begin(), heap.end());
  std::vector<int> out;
  out.reserve(heap.size());
  for (auto& [d2, i] : heap) out.push_back(i);
  return out;
}

void KdTree::radius_search(int node, const Vec3& q, double r2,
                           std::vector<int>& out) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = pts_[n.point];
  if ((p - q).squaredNorm() <= r2) out.push_back(n.point);
  double diff = q[n.axis] - p[n.axis];
  if (diff <= 0) {
    radius_search(n.left, q, r2, out);
    if (diff * diff <= r2) radius_search(n.right, q, r2, out);
  } else {
    radius_search(n.right, q, r2, out);
    if (diff * diff <= r2) radius_search(n.left, q, r2, out);
  }
}

std::vector<int> KdTree::radius(const Vec3& query, double r) const {
  if (pts_.empty()) throw std::invalid_argument("empty input");
  if (!(r > 0)) throw std::invalid_argument("radius must be > 0");
  std::vector<int> out;
  radius_search(root_, query, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

int KdTree::nearest(const Vec3& query) const { return knn(query, 1)[0]; }

}  // namespace skelcover
