#include "skelcover/planner.hpp"

#include "skelcover/kd_tree.hpp"
#include "skelcover/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>

namespace skelcover {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::uint64_t mix_bits(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

}  // namespace

void DynamicLimits::validate() const {
  if (!(v_max > 0.0) || !(omega_max > 0.0) || !(a_max > 0.0) || !(j_max > 0.0))
    throw std::invalid_argument("dynamic limits must be positive");
}

double traversal_cost(const Viewpoint& a, const Viewpoint& b, double length,
                      const DynamicLimits& limits) {
  double c = length / limits.v_max;
  c = std::max(c, ang_dist(a.pitch, b.pitch) / limits.omega_max);
  c = std::max(c, ang_dist(a.yaw, b.yaw) / limits.omega_max);
  return c;
}

std::vector<std::pair<PathCache::Key, double>>& PathCache::bucket(const Vec3& a,
                                                                  const Vec3& b,
                                                                  Key& key) {
  const Vec3* lo = &a;
  const Vec3* hi = &b;
  if (std::lexicographical_compare(hi->data(), hi->data() + 3, lo->data(),
                                   lo->data() + 3))
    std::swap(lo, hi);
  key = {(*lo)[0], (*lo)[1], (*lo)[2], (*hi)[0], (*hi)[1], (*hi)[2]};
  std::uint64_t h = 0;
  for (double v : key) h = mix_bits(h, v);
  return lengths_[h];
}

double PathCache::length(const OccupancyGrid& grid, const Vec3& a, const Vec3& b) {
  Key key;
  auto& entries = bucket(a, b, key);
  for (const auto& [k, len] : entries)
    if (k == key) return len;
  double len = kInf;
  try {
    len = astar_path(grid, a, b).length;
  } catch (const std::exception&) {
  }
  entries.push_back({key, len});
  ++count_;
  return len;
}

void PathCache::put(const Vec3& a, const Vec3& b, double len) {
  Key key;
  auto& entries = bucket(a, b, key);
  for (const auto& e : entries)
    if (e.first == key) return;
  entries.push_back({key, len});
  ++count_;
}

void PathCache::merge(const PathCache& other) {
  for (const auto& [h, entries] : other.lengths_) {
    auto& mine = lengths_[h];
    for (const auto& entry : entries) {
      bool seen = false;
      for (const auto& e : mine)
        if (e.first == entry.first) seen = true;
      if (seen) continue;
      mine.push_back(entry);
      ++count_;
    }
  }
}

std::vector<Vec3> subspace_centroids(const std::vector<Viewpoint>& viewpoints,
                                     const std::vector<std::vector<int>>& by_subspace) {
  std::vector<Vec3> centroids(by_subspace.size(), Vec3::Zero());
  for (std::size_t s = 0; s < by_subspace.size(); ++s) {
    if (by_subspace[s].empty()) continue;
    Vec3 sum = Vec3::Zero();
    for (int v : by_subspace[s]) sum += viewpoints[v].position;
    centroids[s] = sum / double(by_subspace[s].size());
  }
  return centroids;
}

std::vector<int> global_sequence(const std::vector<Viewpoint>& viewpoints,
                                 const std::vector<std::vector<int>>& by_subspace,
                                 const Vec3& current_pose, std::uint64_t seed) {
  std::vector<int> ids;
  for (std::size_t s = 0; s < by_subspace.size(); ++s) {
    if (by_subspace[s].empty()) throw std::invalid_argument("empty subspace");
    ids.push_back(int(s));
  }
  if (ids.empty()) throw std::invalid_argument("no subspaces");
  if (ids.size() == 1) return ids;

  const auto centroids = subspace_centroids(viewpoints, by_subspace);
  const int n = int(ids.size()) + 1;
  auto point = [&](int i) -> const Vec3& {
    return i == 0 ? current_pose : centroids[ids[i - 1]];
  };
  CostMatrix m(n, TourSemantics::ClosedATSP);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      m.at(i, j) = (i == j || j == 0) ? 0.0 : (point(i) - point(j)).norm();
  Tour tour = solve(m, seed);
  std::vector<int> seq;
  seq.reserve(ids.size());
  for (int k = 1; k < n; ++k) seq.push_back(ids[tour.order[k] - 1]);
  return seq;
}

std::vector<Boundary> select_boundaries(const std::vector<Viewpoint>& viewpoints,
                                        const std::vector<std::vector<int>>& by_subspace,
                                        const std::vector<int>& sequence,
                                        const std::vector<Vec3>& centroid_seq) {
  const int n = int(sequence.size());
  if (int(centroid_seq.size()) != n + 1)
    throw std::invalid_argument("centroid sequence does not match sequence");
  std::vector<Boundary> out(n);
  for (int i = 0; i < n; ++i) {
    const auto& members = by_subspace[sequence[i]];
    if (members.empty()) throw std::invalid_argument("empty subspace");
    const Vec3& prev = centroid_seq[i];
    const Vec3& cur = centroid_seq[i + 1];
    double best = kInf;
    for (int v : members) {
      double s = (viewpoints[v].position - prev).squaredNorm() +
                 (viewpoints[v].position - cur).squaredNorm();
      if (s < best) {
        best = s;
        out[i].start = v;
      }
    }
    if (i + 1 == n) continue;
    const Vec3& next = centroid_seq[i + 2];
    int e1 = -1, e2 = -1;
    double c1 = kInf, c2 = kInf;
    for (int v : members) {
      double s = (viewpoints[v].position - cur).squaredNorm() +
                 (viewpoints[v].position - next).squaredNorm();
      if (s < c1) {
        c2 = c1;
        e2 = e1;
        c1 = s;
        e1 = v;
      } else if (s < c2) {
        c2 = s;
        e2 = v;
      }
    }
    out[i].end = (e1 == out[i].start && members.size() >= 2) ? e2 : e1;
  }
  return out;
}

CostMatrix local_cost_matrix(const std::vector<Viewpoint>& ordered,
                             const OccupancyGrid& grid, const DynamicLimits& limits,
                             bool last_subspace, PathCache* cache) {
  limits.validate();
  const int n = int(ordered.size());
  if (n < 2) throw std::invalid_argument("need at least two viewpoints");
  PathCache local;
  PathCache& pc = cache ? *cache : local;
  CostMatrix m(n, last_subspace ? TourSemantics::ClosedATSP : TourSemantics::OpenPath);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || j == 0) {
        m.at(i, j) = 0.0;
        continue;
      }
      if (!last_subspace && i == n - 1) {
        m.at(i, j) = kInf;
        continue;
      }
      double len = pc.length(grid, ordered[i].position, ordered[j].position);
      if (!std::isfinite(len)) throw std::runtime_error("unreachable viewpoint");
      m.at(i, j) = traversal_cost(ordered[i], ordered[j], len, limits);
    }
  }
  return m;
}

std::vector<std::vector<int>> plan_local_paths(
    const std::vector<Viewpoint>& viewpoints,
    const std::vector<std::vector<int>>& by_subspace, const std::vector<int>& sequence,
    const std::vector<Boundary>& boundaries, const OccupancyGrid& grid,
    const DynamicLimits& limits, std::uint64_t seed, int workers,
    std::vector<PathCache>* caches) {
  limits.validate();
  const int n = int(sequence.size());
  if (int(boundaries.size()) != n)
    throw std::invalid_argument("boundaries do not match sequence");
  std::vector<std::vector<int>> orders(n);
  std::vector<PathCache> local_caches(n);
  std::mutex failure_mu;
  std::exception_ptr failure;
  parallel_for(std::size_t(n), workers, [&](std::size_t i) {
    try {
      const auto& members = by_subspace[sequence[i]];
      const Boundary& b = boundaries[i];
      const bool last = int(i) == n - 1;
      const int end = last ? -1 : b.end;
      std::vector<int> ids{b.start};
      for (int v : members)
        if (v != b.start && v != end) ids.push_back(v);
      if (end >= 0 && end != b.start) ids.push_back(end);
      if (ids.size() == 1) {
        orders[i] = ids;
        return;
      }
      std::vector<Viewpoint> ordered;
      ordered.reserve(ids.size());
      for (int id : ids) ordered.push_back(viewpoints[id]);
      CostMatrix m = local_cost_matrix(ordered, grid, limits, last, &local_caches[i]);
      Tour tour = solve(m, seed + std::uint64_t(sequence[i]) + 1);
      orders[i].reserve(ids.size());
      for (int k : tour.order) orders[i].push_back(ids[k]);
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  });
  if (failure) std::rethrow_exception(failure);
  if (caches) *caches = std::move(local_caches);
  return orders;
}

CoveragePath assemble(const std::vector<Viewpoint>& viewpoints,
                      const std::vector<int>& sequence,
                      const std::vector<std::vector<int>>& local_orders,
                      const Vec3& current_pose, const OccupancyGrid& grid,
                      const DynamicLimits& limits, PathCache* cache) {
  limits.validate();
  if (local_orders.size() != sequence.size())
    throw std::invalid_argument("local orders do not match sequence");
  CoveragePath path;
  path.start_pose = current_pose;
  for (const auto& order : local_orders)
    for (int id : order) path.viewpoints.push_back(viewpoints[id]);
  path.legs.reserve(path.viewpoints.size());
  Vec3 prev = current_pose;
  for (std::size_t i = 0; i < path.viewpoints.size(); ++i) {
    const Viewpoint& vp = path.viewpoints[i];
    SafePathResult leg;
    try {
      leg = astar_path(grid, prev, vp.position);
    } catch (const std::exception&) {
      throw std::runtime_error("unreachable viewpoint");
    }
    if (cache) cache->put(prev, vp.position, leg.length);
    path.total_length += leg.length;
    path.total_cost += i == 0 ? leg.length / limits.v_max
                              : traversal_cost(path.viewpoints[i - 1], vp,
                                               leg.length, limits);
    prev = vp.position;
    path.legs.push_back(std::move(leg));
  }
  return path;
}

CoveragePath refine_path(const CoveragePath& path, const SkeletonGraph& graph,
                         const std::vector<Branch>& branches, double r_jc,
                         int iterations, std::uint64_t seed, const OccupancyGrid& grid,
                         const DynamicLimits& limits, PathCache* cache) {
  limits.validate();
  const int R = int(path.viewpoints.size());

  std::vector<int> junctions;
  {
    std::vector<int> owner(graph.vertices.size(), -1);
    std::vector<char> shared(graph.vertices.size(), 0);
    for (const Branch& br : branches)
      for (const auto& [u, v] : br.edges)
        for (int x : {u, v}) {
          if (owner[x] < 0)
            owner[x] = br.id;
          else if (owner[x] != br.id)
            shared[x] = 1;
        }
    for (std::size_t x = 0; x < shared.size(); ++x)
      if (shared[x]) junctions.push_back(int(x));
  }
  if (iterations <= 0 || junctions.empty() || R < 4) return path;

  std::vector<Vec3> positions(R);
  for (int i = 0; i < R; ++i) positions[i] = path.viewpoints[i].position;
  KdTree tree(positions);
  std::vector<std::vector<int>> sets;
  for (int z : junctions) {
    auto near = tree.radius(graph.vertices[z], r_jc);
    if (near.size() >= 2) sets.push_back(std::move(near));
  }
  if (sets.empty()) return path;

  PathCache local;
  PathCache& pc = cache ? *cache : local;
  std::vector<int> order(R), pos(R);
  for (int i = 0; i < R; ++i) order[i] = pos[i] = i;
  std::vector<double> arc_cost(R - 1, 0.0);
  for (int k = 0; k + 1 < R; ++k) {
    const SafePathResult& leg = path.legs[k + 1];
    pc.put(positions[k], positions[k + 1], leg.length);
    arc_cost[k] =
        traversal_cost(path.viewpoints[k], path.viewpoints[k + 1], leg.length, limits);
  }
  auto pair_cost = [&](int u, int w) {
    double len = pc.length(grid, positions[u], positions[w]);
    return traversal_cost(path.viewpoints[u], path.viewpoints[w], len, limits);
  };

  std::mt19937_64 rng(seed);
  auto draw = [&](int count) {
    return int(std::uniform_int_distribution<int>(0, count - 1)(rng));
  };
  std::vector<int> cand;
  bool changed = false;
  for (int t = 0; t < iterations; ++t) {
    const auto& J = sets[t % sets.size()];
    int v1 = J[draw(int(J.size()))];
    int p1 = pos[v1];
    int p2;
    if (p1 == 0)
      p2 = 1;
    else if (p1 == R - 1)
      p2 = R - 2;
    else
      p2 = p1 + (draw(2) ? 1 : -1);
    int v2 = order[p2];
    int pf = p2 + (p2 > p1 ? 1 : -1);
    int far = (pf >= 0 && pf < R) ? order[pf] : -1;
    cand.clear();
    for (int v : J)
      if (v != v1 && v != v2 && v != far && pos[v] < R - 1) cand.push_back(v);
    if (cand.empty()) continue;
    int v3 = cand[draw(int(cand.size()))];
    int p = std::min(std::min(p1, p2), pos[v3]);
    int q = std::max(std::min(p1, p2), pos[v3]);
    if (p == q) continue;
    double new_p = pair_cost(order[p], order[q]);
    double new_q = pair_cost(order[p + 1], order[q + 1]);
    if (!(new_p + new_q < arc_cost[p] + arc_cost[q] - 1e-12)) continue;
    std::reverse(order.begin() + p + 1, order.begin() + q + 1);
    for (int k = p + 1; k <= q; ++k) pos[order[k]] = k;
    std::reverse(arc_cost.begin() + p + 1, arc_cost.begin() + q);
    arc_cost[p] = new_p;
    arc_cost[q] = new_q;
    changed = true;
  }
  if (!changed) return path;

  CoveragePath out;
  out.start_pose = path.start_pose;
  out.viewpoints.reserve(R);
  for (int k = 0; k < R; ++k) out.viewpoints.push_back(path.viewpoints[order[k]]);
  out.legs.reserve(R);
  Vec3 prev = path.start_pose;
  for (int k = 0; k < R; ++k) {
    SafePathResult leg;
    try {
      leg = astar_path(grid, prev, out.viewpoints[k].position);
    } catch (const std::exception&) {
      throw std::runtime_error("unreachable viewpoint");
    }
    out.total_length += leg.length;
    out.total_cost += k == 0 ? leg.length / limits.v_max
                             : traversal_cost(out.viewpoints[k - 1], out.viewpoints[k],
                                              leg.length, limits);
    prev = out.viewpoints[k].position;
    out.legs.push_back(std::move(leg));
  }
  return out;
}

PlanResult plan(const OccupancyGrid& grid, const SkeletonGraph& graph,
                const std::vector<Branch>& branches, std::vector<Subspace>& subspaces,
                const ViewpointGenResult& gen, const SensorModel& sensor,
                const PlanParams& params) {
  params.limits.validate();
  std::vector<std::vector<int>> groups;
  std::vector<int> group_ids;
  for (std::size_t s = 0; s < gen.by_subspace.size(); ++s) {
    if (gen.by_subspace[s].empty()) continue;
    groups.push_back(gen.by_subspace[s]);
    group_ids.push_back(int(s));
  }
  if (groups.empty()) throw std::invalid_argument("no viewpoints to plan");

  const auto centroids = subspace_centroids(gen.viewpoints, gen.by_subspace);
  for (auto& s : subspaces)
    if (s.id >= 0 && s.id < int(centroids.size()) && !gen.by_subspace[s.id].empty())
      s.centroid_of_viewpoints = centroids[s.id];

  PlanResult result;
  PlanDiagnostics& diag = result.diagnostics;

  auto t0 = Clock::now();
  auto sequence =
      global_sequence(gen.viewpoints, groups, params.current_pose, params.seed);
  diag.sequence_ms = ms_since(t0);

  t0 = Clock::now();
  const auto group_centroids = subspace_centroids(gen.viewpoints, groups);
  std::vector<Vec3> centroid_seq{params.current_pose};
  for (int s : sequence) centroid_seq.push_back(group_centroids[s]);
  auto boundaries = select_boundaries(gen.viewpoints, groups, sequence, centroid_seq);
  diag.boundary_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<PathCache> caches;
  auto orders = plan_local_paths(gen.viewpoints, groups, sequence, boundaries, grid,
                                 params.limits, params.seed, params.workers, &caches);
  diag.local_ms = ms_since(t0);

  t0 = Clock::now();
  PathCache cache;
  for (const auto& c : caches) cache.merge(c);
  CoveragePath coarse = assemble(gen.viewpoints, sequence, orders, params.current_pose,
                                 grid, params.limits, &cache);
  diag.assemble_ms = ms_since(t0);
  diag.cost_before_refine = coarse.total_cost;
  diag.length_before_refine = coarse.total_length;

  t0 = Clock::now();
  double r_jc = params.r_jc > 0.0 ? params.r_jc : 2.0 * query_radius(sensor);
  result.path = refine_path(coarse, graph, branches, r_jc, params.refine_iterations,
                            params.seed, grid, params.limits, &cache);
  diag.refine_ms = ms_since(t0);
  diag.cost_after_refine = result.path.total_cost;
  diag.length_after_refine = result.path.total_length;

  diag.sequence.reserve(sequence.size());
  diag.viewpoints_per_subspace.reserve(sequence.size());
  for (int s : sequence) {
    diag.sequence.push_back(group_ids[s]);
    diag.viewpoints_per_subspace.push_back(int(groups[s].size()));
  }
  return result;
}

CoveragePath global_only_path(const std::vector<Viewpoint>& viewpoints,
                              const Vec3& current_pose, const OccupancyGrid& grid,
                              const DynamicLimits& limits, std::uint64_t seed) {
  limits.validate();
  if (viewpoints.empty()) throw std::invalid_argument("no viewpoints to plan");
  int start = 0;
  double best = kInf;
  for (std::size_t i = 0; i < viewpoints.size(); ++i) {
    double d = (viewpoints[i].position - current_pose).squaredNorm();
    if (d < best) {
      best = d;
      start = int(i);
    }
  }
  std::vector<int> ids{start};
  for (int i = 0; i < int(viewpoints.size()); ++i)
    if (i != start) ids.push_back(i);
  PathCache cache;
  std::vector<int> order = ids;
  if (ids.size() >= 2) {
    std::vector<Viewpoint> ordered;
    ordered.reserve(ids.size());
    for (int id : ids) ordered.push_back(viewpoints[id]);
    CostMatrix m = local_cost_matrix(ordered, grid, limits, true, &cache);
    Tour tour = solve(m, seed);
    order.clear();
    for (int k : tour.order) order.push_back(ids[k]);
  }
  return assemble(viewpoints, {0}, {order}, current_pose, grid, limits, &cache);
}

void write_path_csv(std::ostream& os, const CoveragePath& path) {
  os << "index,x,y,z,pitch,yaw,subspace\n";
  os.precision(17);
  for (std::size_t i = 0; i < path.viewpoints.size(); ++i) {
    const Viewpoint& v = path.viewpoints[i];
    os << i << "," << v.position[0] << "," << v.position[1] << "," << v.position[2]
       << "," << v.pitch << "," << v.yaw << "," << v.subspace << "\n";
  }
}

void write_path_polyline(std::ostream& os, const CoveragePath& path) {
  std::vector<Vec3> pts{path.start_pose};
  for (const auto& leg : path.legs)
    for (std::size_t k = 1; k < leg.waypoints.size(); ++k)
      pts.push_back(leg.waypoints[k]);
  os << "path " << pts.size() << "\n";
  os.precision(17);
  for (const auto& p : pts) os << "v " << p[0] << " " << p[1] << " " << p[2] << "\n";
}

void write_plan_diagnostics(std::ostream& os, const PlanDiagnostics& diag) {
  nlohmann::json j;
  j["stage_ms"]["global_sequence"] = diag.sequence_ms;
  j["stage_ms"]["boundaries"] = diag.boundary_ms;
  j["stage_ms"]["local_paths"] = diag.local_ms;
  j["stage_ms"]["assemble"] = diag.assemble_ms;
  j["stage_ms"]["refine"] = diag.refine_ms;
  j["sequence"] = diag.sequence;
  j["viewpoints_per_subspace"] = diag.viewpoints_per_subspace;
  j["cost_before_refine"] = diag.cost_before_refine;
  j["cost_after_refine"] = diag.cost_after_refine;
  j["length_before_refine"] = diag.length_before_refine;
  j["length_after_refine"] = diag.length_after_refine;
  os << j.dump(2) << "\n";
}

}  // namespace skelcover
