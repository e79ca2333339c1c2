#include "skelcover/skeleton.hpp"

#include "skelcover/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace skelcover {

namespace {

Vec3 canonical_sign(Vec3 v) {
  for (int a = 0; a < 3; ++a) {
    if (std::fabs(v[a]) > 1e-12) {
      if (v[a] < 0) v = -v;
      return v;
    }
  }
  return v;
}

// Angle between undirected lines.
double line_angle(const Vec3& a, const Vec3& b) {
  double c = std::min(1.0, std::fabs(a.dot(b)));
  return std::acos(c);
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::pair<PointCloud, NormalizeTransform> normalize_cloud(
    const PointCloud& cloud) {
  cloud.require_nonempty();
  NormalizeTransform t;
  t.center = Vec3::Zero();
  for (const auto& p : cloud.points) t.center += p;
  t.center /= double(cloud.points.size());
  double max_r = 0.0;
  for (const auto& p : cloud.points)
    max_r = std::max(max_r, (p - t.center).norm());
  if (max_r <= 0.0) throw std::invalid_argument("degenerate cloud");
  t.scale = 1.0 / max_r;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(t.to_normalized(p));
  out.normals = cloud.normals;  // directions are scale-invariant
  return {out, t};
}

PointCloud estimate_normals(const PointCloud& cloud, int k) {
  cloud.require_nonempty();
  if (k < 3) throw std::invalid_argument("insufficient neighborhood");
  if (cloud.points.size() < std::size_t(k) + 1)
    throw std::invalid_argument("insufficient neighborhood");
  KdTree tree(cloud.points);
  PointCloud out = cloud;
  out.normals.assign(cloud.points.size(), Vec3::UnitZ());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    auto nn = tree.knn(cloud.points[i], k);
    Vec3 centroid = Vec3::Zero();
    for (int j : nn) centroid += cloud.points[j];
    centroid /= double(nn.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nn) {
      Vec3 d = cloud.points[j] - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Vec3 n = es.eigenvectors().col(0).normalized();
    double side = n.dot(cloud.points[i] - centroid);
    if (side < -1e-12)
      n = -n;
    else if (std::fabs(side) <= 1e-12)
      n = canonical_sign(n);
    out.normals[i] = n;
  }
  return out;
}

PointCloud downsample(const PointCloud& cloud, double leaf) {
  cloud.require_nonempty();
  if (!(leaf > 0)) throw std::invalid_argument("leaf must be > 0");
  struct Bucket {
    Vec3 pos_sum{Vec3::Zero()};
    Vec3 nrm_sum{Vec3::Zero()};
    int count = 0;
    int first = -1;
  };
  std::map<std::array<int, 3>, Bucket> buckets;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    std::array<int, 3> key;
    for (int a = 0; a < 3; ++a) key[a] = (int)std::floor(p[a] / leaf);
    Bucket& b = buckets[key];
    b.pos_sum += p;
    if (cloud.has_normals()) {
      // Normals are averaged as lines: members are hemisphere-aligned to
      // the bucket's first normal so antipodal signs cannot cancel.
      Vec3 n = cloud.normals[i];
      if (b.first >= 0 && n.dot(cloud.normals[b.first]) < 0) n = -n;
      b.nrm_sum += n;
    }
    if (b.first < 0) b.first = (int)i;
    ++b.count;
  }
  PointCloud out;
  out.points.reserve(buckets.size());
  if (cloud.has_normals()) out.normals.reserve(buckets.size());
  for (const auto& [key, b] : buckets) {
    out.points.push_back(b.pos_sum / double(b.count));
    if (cloud.has_normals()) {
      Vec3 n = b.nrm_sum;
      if (n.norm() < 1e-9) n = cloud.normals[b.first];
      out.normals.push_back(n.normalized());
    }
  }
  return out;
}

std::vector<int> slab_neighborhood(const PointCloud& cloud,
                                   const KdTree& tree, int idx, const Vec3& v,
                                   double r_neigh, double r_slab) {
  const Vec3& p = cloud.points[idx];
  std::vector<int> out;
  for (int j : tree.radius(p, r_neigh))
    if (std::fabs((cloud.points[j] - p).dot(v)) <= r_slab) out.push_back(j);
  return out;
}

Eigen::Matrix3d normal_second_moment(const PointCloud& cloud,
                                     const std::vector<int>& indices) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int j : indices) m += cloud.normals[j] * cloud.normals[j].transpose();
  return m;
}

namespace {

// Smallest-eigenvalue direction of the normal moment matrix. When the two
// low eigenvalues tie (rank-deficient normal set), the null space is 2D;
// pick the direction with the largest point-position spread so axial
// strips resolve to the structure axis.
Vec3 smallest_moment_direction(const PointCloud& cloud,
                               const std::vector<int>& slab,
                               const Eigen::Matrix3d& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
  Vec3 ev = es.eigenvalues();
  Vec3 e0 = es.eigenvectors().col(0);
  double scale = std::max(ev[2], 1e-30);
  if (ev[1] - ev[0] > 1e-6 * scale) return canonical_sign(e0.normalized());

  Vec3 e1 = es.eigenvectors().col(1);
  Vec3 centroid = Vec3::Zero();
  for (int j : slab) centroid += cloud.points[j];
  centroid /= double(slab.size());
  Eigen::Matrix2d proj = Eigen::Matrix2d::Zero();
  for (int j : slab) {
    Vec3 d = cloud.points[j] - centroid;
    Eigen::Vector2d q(d.dot(e0), d.dot(e1));
    proj += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> ps(proj);
  Eigen::Vector2d w = ps.eigenvectors().col(1);  // largest spread
  return canonical_sign((w[0] * e0 + w[1] * e1).normalized());
}

}  // namespace

Vec3 rosa_orientation(const PointCloud& cloud, const KdTree& tree, int idx,
                      const Vec3& v0, const SkeletonParams& params,
                      bool* flagged, int* iters_out) {
  if (!cloud.has_normals()) throw std::invalid_argument("cloud lacks normals");
  if (flagged) *flagged = false;
  Vec3 v = canonical_sign(v0.normalized());
  for (int it = 0; it < params.max_iters; ++it) {
    auto slab =
        slab_neighborhood(cloud, tree, idx, v, params.r_neigh(), params.r_slab());
    if ((int)slab.size() < 3) {
      if (flagged) *flagged = true;
      if (iters_out) *iters_out = it;
      return v;
    }
    Vec3 next =
        smallest_moment_direction(cloud, slab, normal_second_moment(cloud, slab));
    double delta = line_angle(next, v);
    v = next;
    if (delta < params.tol_rad) {
      if (iters_out) *iters_out = it + 1;
      return v;
    }
  }
  if (iters_out) *iters_out = params.max_iters;
  return v;
}

Vec3 rosa_position(const PointCloud& cloud,
                   const std::vector<int>& neighborhood, int idx,
                   bool* flagged) {
  if (neighborhood.empty()) throw std::invalid_argument("empty neighborhood");
  if (flagged) *flagged = false;
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Vec3 b = Vec3::Zero();
  for (int j : neighborhood) {
    Eigen::Matrix3d m =
        Eigen::Matrix3d::Identity() - cloud.normals[j] * cloud.normals[j].transpose();
    A += m;
    b += m * cloud.points[j];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(A);
  Vec3 ev = es.eigenvalues();
  if (ev[0] > 1e-8 * std::max(ev[2], 1e-30)) {
    // Well-conditioned normal equations.
    return es.eigenvectors() *
           (es.eigenvectors().transpose() * b).cwiseQuotient(ev);
  }
  // All normals (near-)parallel: project the centroid onto the common
  // normal line through the point.
  if (flagged) *flagged = true;
  Vec3 centroid = Vec3::Zero();
  for (int j : neighborhood) centroid += cloud.points[j];
  centroid /= double(neighborhood.size());
  const Vec3& p = cloud.points[idx];
  Vec3 n = cloud.normals[idx];
  return p + (centroid - p).dot(n) * n;
}

std::vector<RosaPoint> compute_rosa_points(const PointCloud& downsampled,
                                           const SkeletonParams& params) {
  downsampled.require_nonempty();
  if (!downsampled.has_normals())
    throw std::invalid_argument("cloud lacks normals");
  KdTree tree(downsampled.points);
  std::vector<RosaPoint> out(downsampled.points.size());
  parallel_for(downsampled.points.size(), params.workers, [&](std::size_t i) {
    const Vec3& n = downsampled.normals[i];
    Vec3 ref = std::fabs(n.dot(Vec3::UnitZ())) > 0.9 ? Vec3::UnitX()
                                                     : Vec3::UnitZ();
    Vec3 v0 = (ref - ref.dot(n) * n).normalized();
    RosaPoint r;
    r.source_index = (int)i;
    bool flag_o = false, flag_p = false;
    r.orientation =
        rosa_orientation(downsampled, tree, (int)i, v0, params, &flag_o);
    auto slab = slab_neighborhood(downsampled, tree, (int)i, r.orientation,
                                  params.r_neigh(), params.r_slab());
    if (slab.empty()) slab.push_back((int)i);
    r.position = rosa_position(downsampled, slab, (int)i, &flag_p);
    // Positions escaping the local neighborhood ball come from bad local
    // optima (oblique slabs); such points are unusable for linking.
    Vec3 d = r.position - downsampled.points[i];
    double cap = 0.999 * params.r_neigh();
    if (d.norm() > cap) {
      r.position = downsampled.points[i] + d * (cap / d.norm());
      r.degenerate = true;
    }
    if (flag_o) r.degenerate = true;
    r.flagged = r.degenerate || flag_p;
    out[i] = r;
  });
  return out;
}

std::vector<std::vector<int>> SkeletonGraph::adjacency() const {
  std::vector<std::vector<int>> adj(vertices.size());
  for (const auto& [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

std::vector<int> SkeletonGraph::degrees() const {
  std::vector<int> deg(vertices.size(), 0);
  for (const auto& [i, j] : edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

std::vector<int> SkeletonGraph::components() const {
  UnionFind uf((int)vertices.size());
  for (const auto& [i, j] : edges) uf.unite(i, j);
  std::vector<int> comp(vertices.size());
  std::map<int, int> remap;
  for (std::size_t v = 0; v < vertices.size(); ++v) {
    int root = uf.find((int)v);
    auto [it, fresh] = remap.insert({root, (int)remap.size()});
    comp[v] = it->second;
  }
  return comp;
}

namespace {

// Segment support: every sample along a->b must stay within the adaptive
// corridor radius of some cloud point.
bool segment_supported(const Vec3& a, const Vec3& b, const KdTree& tree,
                       const PointCloud& cloud, const SkeletonParams& params) {
  double da = (cloud.points[tree.nearest(a)] - a).norm();
  double db = (cloud.points[tree.nearest(b)] - b).norm();
  double r_sup = std::max(params.r_neigh(), 1.1 * std::max(da, db));
  double len = (b - a).norm();
  int steps = std::max(1, (int)std::ceil(len / (0.5 * params.leaf)));
  for (int s = 0; s <= steps; ++s) {
    Vec3 q = a + (b - a) * (double(s) / steps);
    if ((cloud.points[tree.nearest(q)] - q).norm() > r_sup) return false;
  }
  return true;
}

}  // namespace

SkeletonGraph smooth_and_link(const std::vector<RosaPoint>& rosa_points,
                              const PointCloud& cloud,
                              const SkeletonParams& params) {
  if (rosa_points.size() < 2)
    throw std::invalid_argument("skeleton collapsed");
  cloud.require_nonempty();

  std::vector<Vec3> pos;
  for (const auto& r : rosa_points)
    if (!r.degenerate) pos.push_back(r.position);
  if (pos.size() < 2)
    for (const auto& r : rosa_points) pos.push_back(r.position);

  // (a) 1D MLS recentering: linear fit along the dominant direction of
  // each point's r_mls neighborhood.
  KdTree rosa_tree(pos);
  std::vector<Vec3> smoothed = pos;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    auto nb = rosa_tree.radius(pos[i], params.r_mls());
    if (nb.size() < 3) continue;
    Vec3 centroid = Vec3::Zero();
    for (int j : nb) centroid += pos[j];
    centroid /= double(nb.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nb) {
      Vec3 d = pos[j] - centroid;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    Vec3 dir = canonical_sign(es.eigenvectors().col(2).normalized());
    double sum_t = 0, sum_tt = 0;
    Vec3 sum_x = Vec3::Zero(), sum_tx = Vec3::Zero();
    for (int j : nb) {
      double t = (pos[j] - centroid).dot(dir);
      sum_t += t;
      sum_tt += t * t;
      sum_x += pos[j];
      sum_tx += t * pos[j];
    }
    double n = double(nb.size());
    double det = n * sum_tt - sum_t * sum_t;
    if (std::fabs(det) < 1e-12) continue;
    Vec3 slope = (n * sum_tx - sum_t * sum_x) / det;
    Vec3 inter = (sum_x - slope * sum_t) / n;
    double ti = (pos[i] - centroid).dot(dir);
    smoothed[i] = inter + slope * ti;
  }

  // (b) decimation: greedy leader clustering in index order.
  std::vector<Vec3> centers;
  std::vector<std::vector<int>> members;
  std::vector<int> cluster_of(smoothed.size(), -1);
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    int best = -1;
    double best_d = params.r_link();
    for (std::size_t c = 0; c < centers.size(); ++c) {
      double d = (smoothed[i] - centers[c]).norm();
      if (d < best_d - 1e-15 || (std::fabs(d - best_d) <= 1e-15 && best < 0)) {
        best = (int)c;
        best_d = d;
      }
    }
    if (best < 0) {
      centers.push_back(smoothed[i]);
      members.push_back({(int)i});
      cluster_of[i] = (int)centers.size() - 1;
    } else {
      members[best].push_back((int)i);
      cluster_of[i] = best;
    }
  }
  std::vector<Vec3> verts(centers.size());
  for (std::size_t c = 0; c < centers.size(); ++c) {
    Vec3 sum = Vec3::Zero();
    for (int m : members[c]) sum += smoothed[m];
    verts[c] = sum / double(members[c].size());
  }

  // (c) linking: mutual distance < r_edge, segment supported by the cloud,
  // then a relative-neighborhood filter drops chain shortcuts.
  KdTree cloud_tree(cloud.points);
  KdTree vert_tree(verts);
  std::set<std::pair<int, int>> cand;
  for (std::size_t u = 0; u < verts.size(); ++u)
    for (int w : vert_tree.radius(verts[u], params.r_edge()))
      if ((int)u < w &&
          (verts[u] - verts[w]).norm() < params.r_edge() &&
          segment_supported(verts[u], verts[w], cloud_tree, cloud, params))
        cand.insert({(int)u, w});
  std::vector<std::pair<int, int>> edges;
  for (const auto& [u, w] : cand) {
    double duw = (verts[u] - verts[w]).norm();
    bool shortcut = false;
    for (std::size_t z = 0; z < verts.size() && !shortcut; ++z) {
      if ((int)z == u || (int)z == w) continue;
      if ((verts[u] - verts[z]).norm() < duw - 1e-12 &&
          (verts[w] - verts[z]).norm() < duw - 1e-12)
        shortcut = true;
    }
    if (!shortcut) edges.push_back({u, w});
  }

  // Input components of the cloud (union-find over 2*leaf adjacency).
  UnionFind cloud_uf((int)cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i)
    for (int j : cloud_tree.radius(cloud.points[i], 2.0 * params.leaf))
      cloud_uf.unite((int)i, j);
  std::vector<int> vert_comp(verts.size());
  for (std::size_t v = 0; v < verts.size(); ++v)
    vert_comp[v] = cloud_uf.find(cloud_tree.nearest(verts[v]));

  auto skeleton_fragments = [&]() {
    UnionFind uf((int)verts.size());
    for (const auto& [i, j] : edges) uf.unite(i, j);
    std::vector<int> frag(verts.size());
    for (std::size_t v = 0; v < verts.size(); ++v) frag[v] = uf.find((int)v);
    return frag;
  };

  // (e) bridge fragments that belong to the same input component.
  for (;;) {
    auto frag = skeleton_fragments();
    int bu = -1, bw = -1;
    double best = params.r_bridge();
    for (std::size_t u = 0; u < verts.size(); ++u)
      for (std::size_t w = u + 1; w < verts.size(); ++w) {
        if (frag[u] == frag[w] || vert_comp[u] != vert_comp[w]) continue;
        double d = (verts[u] - verts[w]).norm();
        if (d < best - 1e-15 &&
            segment_supported(verts[u], verts[w], cloud_tree, cloud, params)) {
          best = d;
          bu = (int)u;
          bw = (int)w;
        }
      }
    if (bu < 0) break;
    edges.push_back({bu, bw});
  }

  // (d) keep the largest structure per input component.
  auto frag = skeleton_fragments();
  std::map<int, std::map<int, int>> sizes;  // component -> fragment -> count
  for (std::size_t v = 0; v < verts.size(); ++v)
    sizes[vert_comp[v]][frag[v]]++;
  std::set<int> kept_frags;
  for (const auto& [comp, frags] : sizes) {
    int best_frag = -1, best_n = 0;
    for (const auto& [f, n] : frags)
      if (n > best_n || (n == best_n && (best_frag < 0 || f < best_frag))) {
        best_frag = f;
        best_n = n;
      }
    kept_frags.insert(best_frag);
  }
  std::vector<int> remap(verts.size(), -1);
  SkeletonGraph g;
  for (std::size_t v = 0; v < verts.size(); ++v)
    if (kept_frags.count(frag[v])) {
      remap[v] = (int)g.vertices.size();
      g.vertices.push_back(verts[v]);
    }
  std::set<std::pair<int, int>> final_edges;
  for (const auto& [i, j] : edges) {
    int a = remap[i], b = remap[j];
    if (a < 0 || b < 0 || a == b) continue;
    final_edges.insert({std::min(a, b), std::max(a, b)});
  }
  g.edges.assign(final_edges.begin(), final_edges.end());
  if (g.vertices.size() < 2)
    throw std::runtime_error("skeleton collapsed");
  return g;
}

SkeletonGraph extract_skeleton(const PointCloud& cloud,
                               const SkeletonParams& params) {
  auto [norm_cloud, transform] = normalize_cloud(cloud);
  PointCloud with_normals = norm_cloud.has_normals()
                                ? norm_cloud
                                : estimate_normals(norm_cloud, params.normal_k);
  PointCloud down = downsample(with_normals, params.leaf);
  auto rosa = compute_rosa_points(down, params);
  SkeletonGraph g = smooth_and_link(rosa, down, params);
  for (auto& v : g.vertices) v = transform.to_world(v);
  g.transform = transform;
  return g;
}

void write_skeleton(std::ostream& os, const SkeletonGraph& g) {
  os << "skeleton " << g.vertices.size() << " " << g.edges.size() << "\n";
  os.precision(17);
  for (const auto& v : g.vertices)
    os << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
  for (const auto& [i, j] : g.edges) os << "e " << i << " " << j << "\n";
}

SkeletonGraph read_skeleton(std::istream& is) {
  std::string tag;
  std::size_t nv = 0, ne = 0;
  if (!(is >> tag >> nv >> ne) || tag != "skeleton")
    throw std::runtime_error("bad skeleton file: header");
  SkeletonGraph g;
  g.vertices.reserve(nv);
  g.edges.reserve(ne);
  for (std::size_t i = 0; i < nv; ++i) {
    double x, y, z;
    if (!(is >> tag >> x >> y >> z) || tag != "v")
      throw std::runtime_error("bad skeleton file: vertex line");
    g.vertices.push_back(Vec3(x, y, z));
  }
  for (std::size_t i = 0; i < ne; ++i) {
    int a, b;
    if (!(is >> tag >> a >> b) || tag != "e")
      throw std::runtime_error("bad skeleton file: edge line");
    if (a < 0 || b < 0 || a >= (int)nv || b >= (int)nv)
      throw std::runtime_error("bad skeleton file: edge index");
    g.edges.push_back({std::min(a, b), std::max(a, b)});
  }
  return g;
}

}  // namespace skelcover
