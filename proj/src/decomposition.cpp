#include "skelcover/decomposition.hpp"

#include "skelcover/kd_tree.hpp"
#include "skelcover/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace skelcover {

namespace {

constexpr double kDedupTol = 1e-9;

uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(a) << 32) | static_cast<uint32_t>(b);
}

// Follows the chain from `start` through its neighbor `next` across
// degree-2 vertices until a joint, a leaf, or an already claimed edge
// (the cycle-closing case). Returns the vertex sequence, empty if the
// first edge is already claimed.
std::vector<int> walk_chain(int start, int next,
                            const std::vector<std::vector<int>>& adj,
                            const std::vector<int>& deg,
                            std::unordered_map<uint64_t, bool>& claimed) {
  auto it = claimed.find(edge_key(start, next));
  if (it->second) return {};
  it->second = true;
  std::vector<int> chain{start, next};
  int prev = start;
  int cur = next;
  while (deg[cur] == 2) {
    int nxt = adj[cur][0] == prev ? adj[cur][1] : adj[cur][0];
    auto step = claimed.find(edge_key(cur, nxt));
    if (step->second) break;
    step->second = true;
    chain.push_back(nxt);
    prev = cur;
    cur = nxt;
  }
  return chain;
}

}  // namespace

std::vector<int> find_joints(const SkeletonGraph& graph) {
  std::vector<int> joints;
  const auto deg = graph.degrees();
  for (int v = 0; v < static_cast<int>(deg.size()); ++v)
    if (deg[v] >= 3) joints.push_back(v);
  return joints;
}

double undirected_angle(const Vec3& a, const Vec3& b) {
  double c = std::abs(a.normalized().dot(b.normalized()));
  return std::acos(std::min(1.0, c));
}

std::vector<Branch> decompose_branches(const SkeletonGraph& graph,
                                       double delta) {
  if (graph.vertices.empty()) throw std::invalid_argument("empty graph");
  auto adj = graph.adjacency();
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  const auto deg = graph.degrees();

  std::unordered_map<uint64_t, bool> claimed;
  claimed.reserve(graph.edges.size() * 2);
  for (const auto& [i, j] : graph.edges) claimed[edge_key(i, j)] = false;

  std::vector<std::vector<int>> chains;
  auto try_walk = [&](int start, int nb) {
    auto chain = walk_chain(start, nb, adj, deg, claimed);
    if (chain.size() >= 2) chains.push_back(std::move(chain));
  };

  for (int j : find_joints(graph))
    for (int nb : adj[j]) try_walk(j, nb);

  // Components without joints: a simple path (seed at its lowest leaf) or
  // a pure cycle (seed at its lowest vertex).
  const auto comp = graph.components();
  int ncomp = comp.empty() ? 0 : *std::max_element(comp.begin(), comp.end()) + 1;
  for (int c = 0; c < ncomp; ++c) {
    int seed_leaf = -1;
    int seed_any = -1;
    for (int v = 0; v < static_cast<int>(comp.size()); ++v) {
      if (comp[v] != c || deg[v] == 0) continue;
      bool open = false;
      for (int nb : adj[v])
        if (!claimed[edge_key(v, nb)]) open = true;
      if (!open) continue;
      if (seed_any < 0) seed_any = v;
      if (deg[v] == 1 && seed_leaf < 0) seed_leaf = v;
    }
    int seed = seed_leaf >= 0 ? seed_leaf : seed_any;
    if (seed < 0) continue;
    for (int nb : adj[seed]) try_walk(seed, nb);
  }

  std::vector<Branch> branches;
  for (const auto& chain : chains) {
    Branch cur;
    Vec3 sigma = Vec3::Zero();
    auto flush = [&] {
      if (cur.edges.empty()) return;
      cur.id = static_cast<int>(branches.size());
      cur.reference = sigma;
      branches.push_back(std::move(cur));
      cur = Branch{};
    };
    for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
      int u = chain[k];
      int v = chain[k + 1];
      Vec3 d = graph.vertices[v] - graph.vertices[u];
      double len = d.norm();
      if (len <= kDedupTol) continue;
      d /= len;
      if (cur.edges.empty()) {
        sigma = d;
      } else if (undirected_angle(d, sigma) >= delta) {
        flush();
        sigma = d;
      }
      cur.edges.emplace_back(u, v);
    }
    flush();
  }
  return branches;
}

std::vector<OrientedPoint> discretize_branch(const SkeletonGraph& graph,
                                             const Branch& branch,
                                             double step) {
  if (step <= 0.0) throw std::invalid_argument("step must be > 0");
  std::vector<OrientedPoint> out;
  auto push = [&](const Vec3& p, const Vec3& d) {
    if (!out.empty() && (p - out.back().position).norm() < kDedupTol) return;
    out.push_back({p, d, branch.id});
  };
  for (const auto& [u, v] : branch.edges) {
    Vec3 a = graph.vertices[u];
    Vec3 b = graph.vertices[v];
    double len = (b - a).norm();
    if (len <= kDedupTol) continue;
    Vec3 dir = (b - a) / len;
    for (int k = 0; k * step < len - kDedupTol; ++k)
      push(a + (k * step) * dir, dir);
    push(b, dir);
  }
  // A closed chain revisits the first sample.
  if (out.size() > 1 &&
      (out.back().position - out.front().position).norm() < kDedupTol)
    out.pop_back();
  return out;
}

std::vector<Subspace> allocate_space(const PointCloud& cloud,
                                     const SkeletonGraph& graph,
                                     const std::vector<Branch>& branches,
                                     double step, double slab_halfwidth,
                                     int workers) {
  cloud.require_nonempty();
  if (branches.empty()) throw std::invalid_argument("no branches");

  std::vector<Subspace> subspaces(branches.size());
  std::vector<OrientedPoint> planes;
  std::vector<int> plane_slot;
  std::vector<int> slot_begin(branches.size(), 0);
  for (std::size_t b = 0; b < branches.size(); ++b) {
    subspaces[b].id = branches[b].id;
    subspaces[b].branch = branches[b];
    subspaces[b].planes = discretize_branch(graph, branches[b], step);
    slot_begin[b] = static_cast<int>(planes.size());
    planes.insert(planes.end(), subspaces[b].planes.begin(),
                  subspaces[b].planes.end());
    plane_slot.insert(plane_slot.end(), subspaces[b].planes.size(),
                      static_cast<int>(b));
  }
  if (planes.empty()) throw std::invalid_argument("no branches");

  KdTree cloud_tree(cloud.points);
  std::vector<Vec3> plane_pos(planes.size());
  for (std::size_t i = 0; i < planes.size(); ++i)
    plane_pos[i] = planes[i].position;

  // Capture pass: each plane gathers its slab independently.
  std::vector<std::vector<int>> captures(planes.size());
  parallel_for(planes.size(), workers, [&](std::size_t i) {
    const auto& o = planes[i];
    double r_plane =
        3.0 * (cloud.points[cloud_tree.nearest(o.position)] - o.position)
                  .norm();
    for (int j : cloud_tree.radius(o.position, r_plane)) {
      double off = (cloud.points[j] - o.position).dot(o.direction);
      if (std::abs(off) <= slab_halfwidth) captures[i].push_back(j);
    }
  });

  // Ownership resolution: nearest capturing plane wins; strict improvement
  // keeps the lower plane index (hence lower subspace id) on exact ties.
  std::vector<double> best_d2(cloud.size(), kInf);
  std::vector<int> owner(cloud.size(), -1);
  for (std::size_t i = 0; i < planes.size(); ++i) {
    for (int j : captures[i]) {
      double d2 = (cloud.points[j] - plane_pos[i]).squaredNorm();
      if (d2 < best_d2[j]) {
        best_d2[j] = d2;
        owner[j] = static_cast<int>(i);
      }
    }
  }

  // Fallback: uncaptured points join the globally nearest oriented point
  // (kd-tree ties resolve to the lower index).
  KdTree plane_tree(plane_pos);
  for (std::size_t j = 0; j < cloud.size(); ++j)
    if (owner[j] < 0) owner[j] = plane_tree.nearest(cloud.points[j]);

  for (std::size_t j = 0; j < cloud.size(); ++j) {
    int slot = plane_slot[owner[j]];
    subspaces[slot].allocated_points.push_back(static_cast<int>(j));
    subspaces[slot].allocated_planes.push_back(owner[j] - slot_begin[slot]);
  }
  return subspaces;
}

std::vector<int> subspace_labels(const std::vector<Subspace>& subspaces,
                                 std::size_t cloud_size) {
  std::vector<int> labels(cloud_size, -1);
  for (const auto& s : subspaces)
    for (int j : s.allocated_points) labels[j] = s.id;
  return labels;
}

void write_subspace_labels(std::ostream& os, const std::vector<int>& labels) {
  for (int l : labels) os << l << "\n";
}

void write_branch_summary(std::ostream& os,
                          const std::vector<Subspace>& subspaces) {
  os << std::left << std::setw(6) << "id" << std::setw(8) << "edges"
     << std::setw(8) << "points"
     << "reference\n";
  os << std::fixed << std::setprecision(6);
  for (const auto& s : subspaces) {
    os << std::setw(6) << s.id << std::setw(8) << s.branch.edges.size()
       << std::setw(8) << s.allocated_points.size() << s.branch.reference[0]
       << " " << s.branch.reference[1] << " " << s.branch.reference[2]
       << "\n";
  }
}

}  // namespace skelcover
