#include "skelcover/viewpoints.hpp"

#include "skelcover/parallel.hpp"
#include "skelcover/raycast.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace skelcover {

namespace {

const std::array<Vec3, 12>& icosphere_directions() {
  static const std::array<Vec3, 12> dirs = [] {
    const double g = (1.0 + std::sqrt(5.0)) / 2.0;
    std::array<Vec3, 12> raw{Vec3(-1, g, 0),   Vec3(1, g, 0),
                             Vec3(-1, -g, 0),  Vec3(1, -g, 0),
                             Vec3(0, -1, g),   Vec3(0, 1, g),
                             Vec3(0, -1, -g),  Vec3(0, 1, -g),
                             Vec3(g, 0, -1),   Vec3(g, 0, 1),
                             Vec3(-g, 0, -1),  Vec3(-g, 0, 1)};
    for (auto& d : raw) d.normalize();
    return raw;
  }();
  return dirs;
}

bool position_valid(const OccupancyGrid& grid, const Vec3& p) {
  return grid.in_bounds_world(p) && grid.traversable(grid.world_to_voxel(p));
}

std::vector<std::size_t> sorted_union(const std::vector<Viewpoint>& vps) {
  std::vector<std::size_t> all;
  for (const auto& vp : vps)
    all.insert(all.end(), vp.covered.begin(), vp.covered.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

}  // namespace

void SensorModel::validate() const {
  if (!(fov_h > 0.0) || fov_h >= kPi || !(fov_w > 0.0) || fov_w >= kPi ||
      !(d_v > 0.0) || !(gimbal_min < gimbal_max))
    throw std::invalid_argument("invalid sensor");
}

double query_radius(const SensorModel& sensor) {
  sensor.validate();
  return sensor.d_v * std::tan(std::min(sensor.fov_h, sensor.fov_w) / 2.0);
}

std::pair<double, double> view_angles(const Vec3& dr) {
  Vec3 u = dr.normalized();
  // 0.0 - x maps signed zeros to +0, so axis-aligned rays yaw to +pi
  // rather than -pi and vertical rays to 0.
  return {std::asin(std::clamp(-u[2], -1.0, 1.0)),
          std::atan2(0.0 - u[1], 0.0 - u[0])};
}

Vec3 view_direction(double pitch, double yaw) {
  double c = std::cos(pitch);
  return {c * std::cos(yaw), c * std::sin(yaw), std::sin(pitch)};
}

InternalLabelResult label_internal_and_rays(OccupancyGrid& grid,
                                            const PointCloud& cloud,
                                            const std::vector<Subspace>& subspaces,
                                            int workers) {
  struct Task {
    Vec3 origin;
    Vec3 target;
    int subspace;
  };
  std::vector<Task> tasks;
  for (const auto& s : subspaces)
    for (std::size_t k = 0; k < s.allocated_points.size(); ++k)
      tasks.push_back({s.planes[s.allocated_planes[k]].position,
                       cloud.points[s.allocated_points[k]], s.id});

  struct Cast {
    std::vector<Vec3i> internal;
    SamplingRay ray;
    enum { None, NoHit, Degenerate, Ok } kind = None;
  };
  std::vector<Cast> casts(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    const auto& task = tasks[i];
    Cast& c = casts[i];
    if (!grid.in_bounds_world(task.origin) ||
        !grid.in_bounds_world(task.target)) {
      c.kind = Cast::NoHit;
      return;
    }
    Vec3 seg = task.target - task.origin;
    double len = seg.norm();
    if (len < 1e-12) {
      c.kind = Cast::Degenerate;
      return;
    }
    auto res = raycast(grid, task.origin, task.target);
    if (!res.hit) {
      c.kind = Cast::NoHit;
      return;
    }
    for (const auto& v : res.traversed) {
      if (v == *res.hit) break;
      c.internal.push_back(v);
    }
    c.ray.sr = task.origin + res.hit_t * seg;
    c.ray.dr = seg / len;
    c.ray.subspace = task.subspace;
    c.ray.voxel = *res.hit;
    c.kind = Cast::Ok;
  });

  InternalLabelResult result;
  for (auto& c : casts) {
    switch (c.kind) {
      case Cast::NoHit:
        ++result.no_hit_rays;
        break;
      case Cast::Degenerate:
        ++result.degenerate_rays;
        break;
      case Cast::Ok:
        for (const auto& v : c.internal)
          if (grid.state(v) == VoxelState::Free) {
            grid.mark_internal(v);
            ++result.internal_count;
          }
        result.rays.push_back(c.ray);
        break;
      default:
        break;
    }
  }
  return result;
}

std::vector<SamplingRay> dedupe_rays(const OccupancyGrid& grid,
                                     const std::vector<SamplingRay>& rays) {
  std::vector<char> seen(grid.voxel_count(), 0);
  std::vector<SamplingRay> out;
  for (const auto& r : rays) {
    std::size_t i = grid.linear_index(r.voxel);
    if (seen[i]) continue;
    seen[i] = 1;
    out.push_back(r);
  }
  return out;
}

std::optional<Viewpoint> sample_viewpoint(const SamplingRay& ray, double D,
                                          const OccupancyGrid& grid,
                                          const SensorModel& sensor,
                                          SampleStats* stats) {
  Vec3 dr = ray.dr.normalized();
  auto [pitch, yaw] = view_angles(dr);
  if (pitch < sensor.gimbal_min || pitch > sensor.gimbal_max) {
    // Tilt the ray to the gimbal envelope, keeping the azimuth, so the
    // pose still looks straight at sr.
    pitch = std::clamp(pitch, sensor.gimbal_min, sensor.gimbal_max);
    dr = -view_direction(pitch, yaw);
    if (stats) ++stats->pitch_clamped;
  }

  double h = grid.voxel_size() / 2.0;
  double dist = D;
  Vec3 p = ray.sr + dist * dr;
  bool pulled = false;
  while (!position_valid(grid, p)) {
    dist -= h;
    pulled = true;
    if (dist < D / 2.0 || dist <= 0.0) {
      if (stats) ++stats->discarded;
      return std::nullopt;
    }
    p = ray.sr + dist * dr;
  }
  if (pulled && stats) ++stats->pulled_back;

  Viewpoint vp;
  vp.position = p;
  vp.pitch = pitch;
  vp.yaw = wrap_angle(yaw);
  vp.subspace = ray.subspace;
  return vp;
}

std::vector<Viewpoint> sample_initial_viewpoints(
    const std::vector<SamplingRay>& rays, double D, const OccupancyGrid& grid,
    const SensorModel& sensor, SampleStats* stats) {
  std::vector<Viewpoint> out;
  out.reserve(rays.size());
  for (const auto& r : rays)
    if (auto vp = sample_viewpoint(r, D, grid, sensor, stats))
      out.push_back(std::move(*vp));
  return out;
}

CoverageContext::CoverageContext(const OccupancyGrid& grid) {
  for (std::size_t i = 0; i < grid.voxel_count(); ++i)
    if (grid.state_at(i) == VoxelState::Occupied) {
      centers.push_back(grid.voxel_center(grid.from_linear(i)));
      linear.push_back(i);
    }
  tree.build(centers);
}

std::vector<std::size_t> coverage_set(const Viewpoint& vp,
                                      const OccupancyGrid& grid,
                                      const SensorModel& sensor,
                                      const CoverageContext& ctx) {
  std::vector<std::size_t> out;
  if (ctx.centers.empty() || !grid.in_bounds_world(vp.position)) return out;
  Vec3 fwd = view_direction(vp.pitch, vp.yaw);
  Vec3 right(std::sin(vp.yaw), -std::cos(vp.yaw), 0.0);
  Vec3 up = right.cross(fwd);
  double half_h = sensor.fov_h / 2.0;
  double half_w = sensor.fov_w / 2.0;
  for (int idx : ctx.tree.radius(vp.position, sensor.d_v)) {
    Vec3 w = ctx.centers[idx] - vp.position;
    double xf = w.dot(fwd);
    if (xf <= 0.0) continue;
    if (std::abs(std::atan2(w.dot(right), xf)) > half_h) continue;
    if (std::abs(std::atan2(w.dot(up), xf)) > half_w) continue;
    if (!birc_visible(grid, vp.position, ctx.centers[idx])) continue;
    out.push_back(ctx.linear[idx]);
  }
  return out;
}

std::vector<std::size_t> coverage_set(const Viewpoint& vp,
                                      const OccupancyGrid& grid,
                                      const SensorModel& sensor) {
  return coverage_set(vp, grid, sensor, CoverageContext(grid));
}

VoxelAssignment assign_voxels(const std::vector<Viewpoint>& viewpoints) {
  VoxelAssignment res;
  for (int i = 0; i < static_cast<int>(viewpoints.size()); ++i) {
    for (std::size_t v : viewpoints[i].covered) {
      auto it = res.owner.find(v);
      if (it == res.owner.end())
        res.owner.emplace(v, i);
      else if (viewpoints[i].covered.size() >
               viewpoints[it->second].covered.size())
        it->second = i;
    }
  }
  std::vector<std::size_t> owned(viewpoints.size(), 0);
  for (const auto& [v, i] : res.owner) ++owned[i];
  for (int i = 0; i < static_cast<int>(viewpoints.size()); ++i)
    if (owned[i] > 0) res.kept.push_back(i);
  return res;
}

GravitateResult gravitate_update(const Viewpoint& vp_q,
                                 const std::vector<Viewpoint>& neighbors,
                                 const OccupancyGrid& grid,
                                 const SensorModel& sensor, double D) {
  GravitateResult res;
  res.updated = vp_q;
  double c_q = static_cast<double>(vp_q.covered.size());

  Vec3 dp = Vec3::Zero();
  double dpitch = 0.0;
  double dyaw = 0.0;
  for (int i = 0; i < static_cast<int>(neighbors.size()); ++i) {
    const auto& a = neighbors[i];
    if (c_q <= 0.0 || a.covered.size() >= vp_q.covered.size()) continue;
    double w = static_cast<double>(a.covered.size()) / c_q;
    dp += w * (a.position - vp_q.position);
    dpitch += w * ang_diff(a.pitch, vp_q.pitch);
    dyaw += w * ang_diff(a.yaw, vp_q.yaw);
    res.absorbed.push_back(i);
  }

  Vec3 p_new = vp_q.position + dp;
  if (!res.absorbed.empty() && !position_valid(grid, p_new)) {
    // Pull back toward the previous valid position; revert if the travel
    // budget is exhausted.
    double h = grid.voxel_size() / 2.0;
    Vec3 back = vp_q.position - p_new;
    double dist = back.norm();
    Vec3 u = dist > 0.0 ? Vec3(back / dist) : Vec3::Zero();
    bool fixed = false;
    for (int k = 1; k * h < dist && k * h <= D / 2.0; ++k) {
      Vec3 cand = p_new + (k * h) * u;
      if (position_valid(grid, cand)) {
        p_new = cand;
        fixed = true;
        break;
      }
    }
    if (!fixed) p_new = vp_q.position;
  }
  res.updated.position = p_new;
  res.updated.pitch = std::clamp(vp_q.pitch + dpitch, sensor.gimbal_min,
                                 sensor.gimbal_max);
  res.updated.yaw = wrap_angle(vp_q.yaw + dyaw);

  // Re-center the FoV on the covered-voxel centroid.
  if (!vp_q.covered.empty()) {
    Vec3 centroid = Vec3::Zero();
    for (std::size_t v : vp_q.covered)
      centroid += grid.voxel_center(grid.from_linear(v));
    centroid /= static_cast<double>(vp_q.covered.size());
    Vec3 d = centroid - p_new;
    double n = d.norm();
    if (n > 1e-12) {
      res.updated.pitch = std::clamp(std::asin(std::clamp(d[2] / n, -1.0, 1.0)),
                                     sensor.gimbal_min, sensor.gimbal_max);
      res.updated.yaw = std::atan2(d[1], d[0]);
    }
  }
  return res;
}

std::vector<std::size_t> coverable_voxels(const OccupancyGrid& grid,
                                          const SensorModel& sensor,
                                          double D) {
  sensor.validate();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < grid.voxel_count(); ++i) {
    if (grid.state_at(i) != VoxelState::Occupied) continue;
    Vec3 c = grid.voxel_center(grid.from_linear(i));
    for (const auto& u : icosphere_directions()) {
      Vec3 p = c + D * u;
      if (!position_valid(grid, p)) continue;
      double pitch = std::asin(std::clamp(-u[2], -1.0, 1.0));
      if (pitch < sensor.gimbal_min || pitch > sensor.gimbal_max) continue;
      if (!birc_visible(grid, p, c)) continue;
      out.push_back(i);
      break;
    }
  }
  return out;
}

ViewpointGenResult generate_viewpoints(const OccupancyGrid& grid,
                                       const std::vector<SamplingRay>& rays,
                                       const SensorModel& sensor,
                                       const ViewpointGenParams& params) {
  sensor.validate();
  double D = params.D > 0.0 ? params.D : 0.8 * sensor.d_v;
  CoverageContext ctx(grid);

  ViewpointGenResult result;
  auto coverable = coverable_voxels(grid, sensor, D);
  result.coverable_count = coverable.size();

  std::vector<Vec3> ray_srs;
  ray_srs.reserve(rays.size());
  for (const auto& r : rays) ray_srs.push_back(r.sr);
  KdTree ray_tree;
  if (!ray_srs.empty()) ray_tree.build(ray_srs);

  std::vector<Viewpoint> active;
  std::vector<Vec3> ini_pos;
  std::vector<int> ini_id;
  std::vector<SamplingRay> pending = rays;
  double r_q = query_radius(sensor);

  auto recompute_coverage = [&](std::vector<Viewpoint>& vps) {
    parallel_for(vps.size(), params.workers, [&](std::size_t i) {
      vps[i].covered = coverage_set(vps[i], grid, sensor, ctx);
    });
  };

  std::vector<std::size_t> uncovered = coverable;
  for (int round = 0; round < params.max_rounds; ++round) {
    result.rounds_used = round + 1;
    RoundStats rs;

    SampleStats ss;
    auto fresh = sample_initial_viewpoints(pending, D, grid, sensor, &ss);
    result.discarded_samples += ss.discarded;
    rs.sampled = static_cast<int>(fresh.size());
    if (round == 0) {
      result.vp_ini_count = static_cast<int>(fresh.size());
      for (const auto& vp : fresh) {
        ini_pos.push_back(vp.position);
        ini_id.push_back(vp.subspace);
      }
    } else if (fresh.empty()) {
      // Every residual ray was discarded; nothing can improve.
      result.rounds.push_back(rs);
      result.exhausted = !uncovered.empty();
      break;
    }
    for (auto& vp : fresh) active.push_back(std::move(vp));
    rs.active_before = static_cast<int>(active.size());
    if (active.empty()) {
      result.rounds.push_back(rs);
      result.exhausted = !coverable.empty();
      break;
    }

    recompute_coverage(active);
    auto asg = assign_voxels(active);
    std::vector<Viewpoint> kept;
    kept.reserve(asg.kept.size());
    for (int i : asg.kept) kept.push_back(std::move(active[i]));
    active = std::move(kept);
    rs.active_after_assign = static_cast<int>(active.size());

    // Gravitation sweep, strongest first; absorbed neighbors go dormant.
    std::vector<int> order(active.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = (int)i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (active[a].covered.size() != active[b].covered.size())
        return active[a].covered.size() > active[b].covered.size();
      return a < b;
    });
    std::vector<char> alive(active.size(), 1);
    for (int idx : order) {
      if (!alive[idx]) continue;
      std::vector<Viewpoint> nb;
      std::vector<int> nb_idx;
      for (int j = 0; j < static_cast<int>(active.size()); ++j) {
        if (j == idx || !alive[j]) continue;
        if ((active[j].position - active[idx].position).norm() > r_q)
          continue;
        if (active[j].covered.size() >= active[idx].covered.size()) continue;
        nb.push_back(active[j]);
        nb_idx.push_back(j);
      }
      auto up = gravitate_update(active[idx], nb, grid, sensor, D);
      active[idx] = std::move(up.updated);
      for (int k : up.absorbed) alive[nb_idx[k]] = 0;
    }
    std::vector<Viewpoint> merged;
    for (std::size_t i = 0; i < active.size(); ++i)
      if (alive[i]) merged.push_back(std::move(active[i]));
    active = std::move(merged);
    rs.active_after_merge = static_cast<int>(active.size());

    recompute_coverage(active);
    auto covered_union = sorted_union(active);
    uncovered.clear();
    std::set_difference(coverable.begin(), coverable.end(),
                        covered_union.begin(), covered_union.end(),
                        std::back_inserter(uncovered));
    rs.uncovered = uncovered.size();
    result.rounds.push_back(rs);

    if (uncovered.empty()) break;
    if (round + 1 == params.max_rounds) {
      result.exhausted = true;
      break;
    }

    // Resample the uncovered residue along reused nearby ray directions.
    pending.clear();
    for (std::size_t lin : uncovered) {
      Vec3i v = grid.from_linear(lin);
      Vec3 c = grid.voxel_center(v);
      if (ray_srs.empty()) continue;
      const auto& src = rays[ray_tree.nearest(c)];
      pending.push_back({c, src.dr, src.subspace, v});
    }
    if (pending.empty()) {
      result.exhausted = true;
      break;
    }
  }

  // Ids follow the nearest initial sample; coverage is recomputed from
  // scratch for the final report.
  if (!ini_pos.empty()) {
    KdTree ini_tree(ini_pos);
    for (auto& vp : active) vp.subspace = ini_id[ini_tree.nearest(vp.position)];
  }
  recompute_coverage(active);
  auto covered_union = sorted_union(active);
  std::vector<std::size_t> covered_coverable;
  std::set_intersection(covered_union.begin(), covered_union.end(),
                        coverable.begin(), coverable.end(),
                        std::back_inserter(covered_coverable));
  result.covered_count = covered_coverable.size();
  result.residual_uncovered = coverable.size() - covered_coverable.size();

  result.viewpoints = std::move(active);
  int max_id = -1;
  for (const auto& vp : result.viewpoints) max_id = std::max(max_id, vp.subspace);
  result.by_subspace.assign(max_id + 1, {});
  for (int i = 0; i < static_cast<int>(result.viewpoints.size()); ++i) {
    int id = result.viewpoints[i].subspace;
    if (id >= 0) result.by_subspace[id].push_back(i);
  }
  return result;
}

void write_viewpoints_csv(std::ostream& os,
                          const std::vector<Viewpoint>& viewpoints) {
  os << "id,x,y,z,pitch_rad,yaw_rad,subspace,covered_count\n";
  os.precision(17);
  for (std::size_t i = 0; i < viewpoints.size(); ++i) {
    const auto& vp = viewpoints[i];
    os << i << "," << vp.position[0] << "," << vp.position[1] << ","
       << vp.position[2] << "," << vp.pitch << "," << vp.yaw << ","
       << vp.subspace << "," << vp.covered.size() << "\n";
  }
}

}  // namespace skelcover
