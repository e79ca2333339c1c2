#include "skelcover/trajectory.hpp"

#include "skelcover/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace skelcover {

namespace {

constexpr double kVelCapFrac = 0.8;
constexpr double kDilate = 1.1;
constexpr int kMaxRounds = 100;
constexpr double kMinDuration = 1e-3;
constexpr double kContainTol = 1e-9;
constexpr double kLimitTol = 1e-6;
// Peak rate of a rest-to-rest quintic is 15/8 of the mean rate.
constexpr double kQuinticPeak = 15.0 / 8.0;
// Upper bound on the peak of the quintic boundary-velocity basis: the
// curve deviates from its chord by at most kDevGain * T * (|v0| + |v1|)
// per axis.
constexpr double kDevGain = 0.2;

struct Chain {
  std::vector<Vec3> pts;
  std::vector<int> anchor;  // chain index of each viewpoint
};

Chain build_chain(const CoveragePath& path) {
  if (path.legs.empty() || path.legs.front().waypoints.empty() ||
      path.legs.size() != path.viewpoints.size())
    throw std::invalid_argument("empty path");
  Chain c;
  c.pts = path.legs.front().waypoints;
  c.anchor.push_back(int(c.pts.size()) - 1);
  for (std::size_t j = 1; j < path.legs.size(); ++j) {
    const auto& w = path.legs[j].waypoints;
    for (std::size_t k = 1; k < w.size(); ++k) c.pts.push_back(w[k]);
    c.anchor.push_back(int(c.pts.size()) - 1);
  }
  return c;
}

// Quintic through (p0, v0, a0) at t=0 and (p1, v1, a1) at t=T.
std::array<double, 6> fit_quintic(double p0, double v0, double a0, double p1,
                                  double v1, double a1, double T) {
  const double T2 = T * T, T3 = T2 * T, T4 = T3 * T, T5 = T4 * T;
  const double dp = p1 - p0;
  std::array<double, 6> c{};
  c[0] = p0;
  c[1] = v0;
  c[2] = a0 / 2.0;
  c[3] = (20.0 * dp - (8.0 * v1 + 12.0 * v0) * T - (3.0 * a0 - a1) * T2) / (2.0 * T3);
  c[4] = (-30.0 * dp + (14.0 * v1 + 16.0 * v0) * T + (3.0 * a0 - 2.0 * a1) * T2) / (2.0 * T4);
  c[5] = (12.0 * dp - 6.0 * (v1 + v0) * T - (a0 - a1) * T2) / (2.0 * T5);
  return c;
}

double sample_step(double duration, double rate_hz) {
  return std::max(1.0 / rate_hz, duration / 1000.0);
}

}  // namespace

double TrajPiece::value(int ch, double t) const {
  const auto& c = coeffs[ch];
  return ((((c[5] * t + c[4]) * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0];
}

double TrajPiece::rate(int ch, double t) const {
  const auto& c = coeffs[ch];
  return (((5.0 * c[5] * t + 4.0 * c[4]) * t + 3.0 * c[3]) * t + 2.0 * c[2]) * t + c[1];
}

double TrajPiece::accel(int ch, double t) const {
  const auto& c = coeffs[ch];
  return ((20.0 * c[5] * t + 12.0 * c[4]) * t + 6.0 * c[3]) * t + 2.0 * c[2];
}

double TrajPiece::jerk(int ch, double t) const {
  const auto& c = coeffs[ch];
  return (60.0 * c[5] * t + 24.0 * c[4]) * t + 6.0 * c[3];
}

Vec3 TrajPiece::position(double t) const {
  return Vec3(value(0, t), value(1, t), value(2, t));
}

Vec3 TrajPiece::velocity(double t) const {
  return Vec3(rate(0, t), rate(1, t), rate(2, t));
}

Vec3 TrajPiece::acceleration(double t) const {
  return Vec3(accel(0, t), accel(1, t), accel(2, t));
}

Vec3 TrajPiece::jerk_vec(double t) const {
  return Vec3(jerk(0, t), jerk(1, t), jerk(2, t));
}

std::vector<Vec3> path_waypoints(const CoveragePath& path) {
  return build_chain(path).pts;
}

std::vector<std::array<double, 2>> path_gimbal_targets(const CoveragePath& path) {
  const Chain chain = build_chain(path);
  const int n = int(chain.pts.size());
  const int m = int(path.viewpoints.size());

  std::vector<double> apitch(m), ayaw(m);
  apitch[0] = path.viewpoints[0].pitch;
  ayaw[0] = path.viewpoints[0].yaw;
  for (int j = 1; j < m; ++j) {
    apitch[j] = path.viewpoints[j].pitch;
    ayaw[j] = ayaw[j - 1] + wrap_angle(path.viewpoints[j].yaw - path.viewpoints[j - 1].yaw);
  }

  std::vector<double> cum(n, 0.0);
  for (int i = 1; i < n; ++i)
    cum[i] = cum[i - 1] + (chain.pts[i] - chain.pts[i - 1]).norm();

  std::vector<std::array<double, 2>> out(n, {apitch[0], ayaw[0]});
  int prev = 0;
  double prev_pitch = apitch[0], prev_yaw = ayaw[0];
  for (int j = 0; j < m; ++j) {
    const int a = chain.anchor[j];
    const double seg = cum[a] - cum[prev];
    for (int w = prev + 1; w <= a; ++w) {
      const double f = seg > 0.0 ? (cum[w] - cum[prev]) / seg
                                 : double(w - prev) / double(a - prev);
      out[w][0] = prev_pitch + f * (apitch[j] - prev_pitch);
      out[w][1] = prev_yaw + f * (ayaw[j] - prev_yaw);
    }
    if (a >= prev) {
      out[a] = {apitch[j], ayaw[j]};
      prev = a;
      prev_pitch = apitch[j];
      prev_yaw = ayaw[j];
    }
  }
  return out;
}

Corridor build_corridors(const CoveragePath& path, const OccupancyGrid& grid,
                         double clearance, double max_extent) {
  if (!(clearance >= 0.0) || grid.voxel_size() <= 0.0 || max_extent <= 0.0)
    throw std::invalid_argument("bad corridor inputs");
  const std::vector<Vec3> W = path_waypoints(path);
  const int M = int(W.size()) - 1;
  if (M < 1) throw std::invalid_argument("empty path");

  const Vec3 glo = grid.origin();
  const Vec3 ghi = grid.origin() + grid.dims().cast<double>() * grid.voxel_size();

  // True when the clearance-dilated range [lo-c, hi+c] admits an Occupied
  // voxel center.
  const auto blocked = [&](const Vec3& lo, const Vec3& hi) {
    const Vec3 dlo = lo - Vec3::Constant(clearance);
    const Vec3 dhi = hi + Vec3::Constant(clearance);
    Vec3i vlo = grid.world_to_voxel(dlo).cwiseMax(Vec3i::Zero());
    Vec3i vhi = grid.world_to_voxel(dhi).cwiseMin((grid.dims() - Vec3i::Ones()).eval());
    for (int x = vlo.x(); x <= vhi.x(); ++x)
      for (int y = vlo.y(); y <= vhi.y(); ++y)
        for (int z = vlo.z(); z <= vhi.z(); ++z) {
          const Vec3i v(x, y, z);
          if (grid.state(v) != VoxelState::Occupied) continue;
          const Vec3 c = grid.voxel_center(v);
          if ((c.array() >= dlo.array()).all() && (c.array() <= dhi.array()).all())
            return true;
        }
    return false;
  };

  const auto grow_face = [&](Aabb& b, int axis, int dir) {
    if (b.max[axis] - b.min[axis] >= max_extent - 1e-12) return false;
    const double step = grid.voxel_size();
    const double cur = dir > 0 ? b.max[axis] : b.min[axis];
    double next;
    if (dir > 0)
      next = std::min({cur + step, b.min[axis] + max_extent, ghi[axis]});
    else
      next = std::max({cur - step, b.max[axis] - max_extent, glo[axis]});
    if (dir > 0 ? next <= cur + 1e-12 : next >= cur - 1e-12) return false;
    Vec3 lo = b.min, hi = b.max;
    (dir > 0 ? hi : lo)[axis] = next;
    (dir > 0 ? lo : hi)[axis] = cur;
    if (blocked(lo, hi)) return false;
    (dir > 0 ? b.max : b.min)[axis] = next;
    return true;
  };

  Corridor corridor;
  corridor.piece_assignment.assign(std::size_t(M), -1);
  int k = 0;
  while (k < M) {
    if (blocked(W[k], W[k]))
      throw std::runtime_error("corridor failure: waypoint too close to obstacles");
    Aabb box;
    box.min = box.max = W[k];
    // Reach the next waypoint first so the piece is containable, then
    // inflate every face for margin.
    for (int axis = 0; axis < 3; ++axis) {
      while (W[k + 1][axis] > box.max[axis] + 1e-12)
        if (!grow_face(box, axis, +1))
          throw std::runtime_error("corridor failure: piece not containable");
      while (W[k + 1][axis] < box.min[axis] - 1e-12)
        if (!grow_face(box, axis, -1))
          throw std::runtime_error("corridor failure: piece not containable");
    }
    for (bool grew = true; grew;) {
      grew = false;
      for (int axis = 0; axis < 3; ++axis)
        for (int dir : {+1, -1}) grew = grow_face(box, axis, dir) || grew;
    }
    const int id = int(corridor.boxes.size());
    int j = k;
    while (j < M && box.contains(W[j + 1], kContainTol)) {
      corridor.piece_assignment[std::size_t(j)] = id;
      ++j;
    }
    corridor.boxes.push_back(box);
    k = j;
  }
  return corridor;
}

namespace {

TrajPiece fit_piece(const Vec3& p0, const Vec3& v0, const std::array<double, 2>& g0,
                    const std::array<double, 2>& r0, const Vec3& p1, const Vec3& v1,
                    const std::array<double, 2>& g1, const std::array<double, 2>& r1,
                    double T) {
  TrajPiece piece;
  piece.duration = T;
  for (int a = 0; a < 3; ++a)
    piece.coeffs[a] = fit_quintic(p0[a], v0[a], 0.0, p1[a], v1[a], 0.0, T);
  for (int ch = 0; ch < 2; ++ch)
    piece.coeffs[3 + ch] = fit_quintic(g0[ch], r0[ch], 0.0, g1[ch], r1[ch], 0.0, T);
  return piece;
}

bool piece_feasible(const TrajPiece& piece, const Aabb& box, const DynamicLimits& limits) {
  const double step = sample_step(piece.duration, 1000.0);
  const int n = int(std::ceil(piece.duration / step));
  for (int k = 0; k <= n; ++k) {
    const double t = std::min(k * step, piece.duration);
    if (piece.velocity(t).norm() > limits.v_max) return false;
    if (piece.acceleration(t).norm() > limits.a_max) return false;
    if (piece.jerk_vec(t).norm() > limits.j_max) return false;
    if (std::abs(piece.rate(3, t)) > limits.omega_max) return false;
    if (std::abs(piece.rate(4, t)) > limits.omega_max) return false;
    if (!box.contains(piece.position(t), kContainTol)) return false;
  }
  return true;
}

// Pure time reparametrization: the curve image is unchanged while every
// rate scales by 1/lambda, acceleration by 1/lambda^2, jerk by 1/lambda^3.
void rescale_piece(TrajPiece& piece, double lambda) {
  piece.duration *= lambda;
  for (auto& ch : piece.coeffs) {
    double f = 1.0;
    for (int k = 1; k < 6; ++k) {
      f /= lambda;
      ch[k] *= f;
    }
  }
}

}  // namespace

Trajectory generate_trajectory(const CoveragePath& path, const Corridor& corridor,
                               const DynamicLimits& limits, int workers) {
  limits.validate();
  const std::vector<Vec3> W = path_waypoints(path);
  const std::vector<std::array<double, 2>> G = path_gimbal_targets(path);
  const int M = int(W.size()) - 1;
  if (M < 1) throw std::invalid_argument("empty path");
  if (int(corridor.piece_assignment.size()) != M)
    throw std::invalid_argument("corridor does not match path");
  for (int id : corridor.piece_assignment)
    if (id < 0 || id >= int(corridor.boxes.size()))
      throw std::invalid_argument("corridor does not match path");

  std::vector<double> T(std::size_t(M));
  for (int i = 0; i < M; ++i) {
    const double L = (W[i + 1] - W[i]).norm();
    const double trap = L > limits.v_max * limits.v_max / limits.a_max
                            ? L / limits.v_max + limits.v_max / limits.a_max
                            : 2.0 * std::sqrt(L / limits.a_max);
    const double angp = kQuinticPeak * std::abs(G[i + 1][0] - G[i][0]) / limits.omega_max;
    const double angy = kQuinticPeak * std::abs(G[i + 1][1] - G[i][1]) / limits.omega_max;
    T[std::size_t(i)] = std::max({trap, angp, angy, kMinDuration});
  }

  // Junction velocities and gimbal rates; fixed before fitting so pieces
  // stay independent and junctions C2 by construction.
  std::vector<Vec3> V(std::size_t(M) + 1, Vec3::Zero());
  std::vector<std::array<double, 2>> R(std::size_t(M) + 1, {0.0, 0.0});
  for (int i = 1; i < M; ++i) {
    const double span = T[std::size_t(i - 1)] + T[std::size_t(i)];
    Vec3 v = (W[i + 1] - W[i - 1]) / span;
    const double cap = kVelCapFrac * limits.v_max;
    if (v.norm() > cap) v *= cap / v.norm();
    V[std::size_t(i)] = v;
    const double rcap = kVelCapFrac * limits.omega_max;
    for (int ch = 0; ch < 2; ++ch)
      R[std::size_t(i)][ch] = std::clamp((G[i + 1][ch] - G[i - 1][ch]) / span, -rcap, rcap);
  }

  // Projection into the corridor: per axis the curve leaves its chord by
  // at most kDevGain * T * (|v0| + |v1|), so shrink junction components
  // until that deviation fits the endpoint face margins. Shrinking only
  // relaxes earlier pieces, so one forward sweep suffices.
  for (int i = 0; i < M; ++i) {
    const Aabb& box = corridor.boxes[corridor.piece_assignment[std::size_t(i)]];
    for (int a = 0; a < 3; ++a) {
      const double lo = std::min(W[i][a], W[i + 1][a]) - box.min[a];
      const double hi = box.max[a] - std::max(W[i][a], W[i + 1][a]);
      const double margin = std::max(0.0, std::min(lo, hi));
      const double dev = kDevGain * T[std::size_t(i)] *
                         (std::abs(V[std::size_t(i)][a]) + std::abs(V[std::size_t(i) + 1][a]));
      if (dev > margin) {
        const double s = dev > 0.0 ? margin / dev : 0.0;
        V[std::size_t(i)][a] *= s;
        V[std::size_t(i) + 1][a] *= s;
      }
    }
  }

  Trajectory traj;
  traj.pieces.resize(std::size_t(M));
  const std::size_t nworkers = std::size_t(std::max(workers, 1));
  parallel_for(std::size_t(M), nworkers, [&](std::size_t i) {
    traj.pieces[i] = fit_piece(W[i], V[i], G[i], R[i], W[i + 1], V[i + 1], G[i + 1],
                               R[i + 1], T[i]);
  });

  // Global dilation: a violation anywhere reparametrizes every piece, so
  // junction rates stay continuous and the geometry never changes.
  std::vector<std::uint8_t> ok(std::size_t(M), 0);
  for (int round = 0;; ++round) {
    parallel_for(std::size_t(M), nworkers, [&](std::size_t i) {
      ok[i] = piece_feasible(traj.pieces[i],
                             corridor.boxes[corridor.piece_assignment[i]], limits);
    });
    if (std::all_of(ok.begin(), ok.end(), [](std::uint8_t b) { return b != 0; })) break;
    if (round + 1 >= kMaxRounds)
      throw std::runtime_error("time dilation cap exceeded; corridor too tight");
    for (TrajPiece& piece : traj.pieces) rescale_piece(piece, kDilate);
  }

  traj.total_time = 0.0;
  for (const TrajPiece& p : traj.pieces) traj.total_time += p.duration;
  return traj;
}

FeasibilityReport validate_trajectory(const Trajectory& traj, const Corridor& corridor,
                                      const DynamicLimits& limits,
                                      const CoveragePath& path, double rate_hz,
                                      int workers) {
  limits.validate();
  if (traj.pieces.empty()) throw std::invalid_argument("empty trajectory");
  if (!(rate_hz > 0.0)) throw std::invalid_argument("bad sample rate");
  const int M = int(traj.pieces.size());

  std::vector<double> maxv(M, 0.0), maxa(M, 0.0), maxj(M, 0.0), maxg(M, 0.0),
      maxc(M, 0.0);
  parallel_for(std::size_t(M), std::size_t(std::max(workers, 1)), [&](std::size_t i) {
    const TrajPiece& piece = traj.pieces[i];
    const Aabb* box = nullptr;
    if (i < corridor.piece_assignment.size()) {
      const int id = corridor.piece_assignment[i];
      if (id >= 0 && id < int(corridor.boxes.size())) box = &corridor.boxes[id];
    }
    const double step = sample_step(piece.duration, rate_hz);
    const int n = int(std::ceil(piece.duration / step));
    for (int k = 0; k <= n; ++k) {
      const double t = std::min(k * step, piece.duration);
      maxv[i] = std::max(maxv[i], piece.velocity(t).norm());
      maxa[i] = std::max(maxa[i], piece.acceleration(t).norm());
      maxj[i] = std::max(maxj[i], piece.jerk_vec(t).norm());
      maxg[i] = std::max({maxg[i], std::abs(piece.rate(3, t)), std::abs(piece.rate(4, t))});
      if (box) {
        const Vec3 p = piece.position(t);
        for (int a = 0; a < 3; ++a)
          maxc[i] = std::max({maxc[i], box->min[a] - p[a], p[a] - box->max[a]});
      } else {
        maxc[i] = kInf;
      }
    }
  });

  FeasibilityReport rep;
  for (int i = 0; i < M; ++i) {
    rep.max_speed = std::max(rep.max_speed, maxv[i]);
    rep.max_accel = std::max(rep.max_accel, maxa[i]);
    rep.max_jerk = std::max(rep.max_jerk, maxj[i]);
    rep.max_gimbal_rate = std::max(rep.max_gimbal_rate, maxg[i]);
    rep.max_corridor_violation = std::max(rep.max_corridor_violation, maxc[i]);
  }

  for (int i = 0; i + 1 < M; ++i) {
    const TrajPiece& a = traj.pieces[i];
    const TrajPiece& b = traj.pieces[i + 1];
    for (int ch = 0; ch < 5; ++ch) {
      rep.max_continuity_residual =
          std::max({rep.max_continuity_residual,
                    std::abs(a.value(ch, a.duration) - b.value(ch, 0.0)),
                    std::abs(a.rate(ch, a.duration) - b.rate(ch, 0.0)),
                    std::abs(a.accel(ch, a.duration) - b.accel(ch, 0.0))});
    }
  }

  const std::vector<Vec3> W = path_waypoints(path);
  const std::vector<std::array<double, 2>> G = path_gimbal_targets(path);
  if (int(W.size()) == M + 1) {
    for (int i = 0; i < M; ++i) {
      const TrajPiece& p = traj.pieces[i];
      rep.max_waypoint_error =
          std::max({rep.max_waypoint_error, (p.position(0.0) - W[i]).norm(),
                    (p.position(p.duration) - W[i + 1]).norm(),
                    std::abs(p.value(3, 0.0) - G[i][0]),
                    std::abs(p.value(3, p.duration) - G[i + 1][0]),
                    std::abs(p.value(4, 0.0) - G[i][1]),
                    std::abs(p.value(4, p.duration) - G[i + 1][1])});
    }
  } else {
    rep.max_waypoint_error = kInf;
  }

  rep.velocity_ok = rep.max_speed <= limits.v_max + kLimitTol;
  rep.accel_ok = rep.max_accel <= limits.a_max + kLimitTol;
  rep.jerk_ok = rep.max_jerk <= limits.j_max + kLimitTol;
  rep.gimbal_ok = rep.max_gimbal_rate <= limits.omega_max + kLimitTol;
  rep.corridor_ok = rep.max_corridor_violation <= kLimitTol;
  rep.continuity_ok = rep.max_continuity_residual <= kLimitTol;
  rep.waypoints_ok = rep.max_waypoint_error <= kLimitTol;
  return rep;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double rate_hz) {
  if (!(rate_hz > 0.0)) throw std::invalid_argument("bad sample rate");
  os << "t,x,y,z,pitch,yaw,vx,vy,vz\n";
  if (traj.pieces.empty()) return;
  os << std::setprecision(10);
  const double dt = 1.0 / rate_hz;
  std::size_t idx = 0;
  double piece_start = 0.0;
  for (std::size_t k = 0;; ++k) {
    double t = std::min(k * dt, traj.total_time);
    while (idx + 1 < traj.pieces.size() &&
           t > piece_start + traj.pieces[idx].duration) {
      piece_start += traj.pieces[idx].duration;
      ++idx;
    }
    const TrajPiece& p = traj.pieces[idx];
    const double local = std::min(t - piece_start, p.duration);
    const Vec3 pos = p.position(local);
    const Vec3 vel = p.velocity(local);
    os << t << ',' << pos.x() << ',' << pos.y() << ',' << pos.z() << ','
       << p.value(3, local) << ',' << p.value(4, local) << ',' << vel.x() << ','
       << vel.y() << ',' << vel.z() << '\n';
    if (t >= traj.total_time) break;
  }
}

void write_trajectory_json(std::ostream& os, const Trajectory& traj) {
  nlohmann::json j;
  j["total_time"] = traj.total_time;
  j["pieces"] = nlohmann::json::array();
  static const char* kChannels[5] = {"x", "y", "z", "pitch", "yaw"};
  for (const TrajPiece& p : traj.pieces) {
    nlohmann::json piece;
    piece["duration"] = p.duration;
    for (int ch = 0; ch < 5; ++ch)
      piece[kChannels[ch]] = p.coeffs[ch];
    j["pieces"].push_back(piece);
  }
  os << j.dump(2) << '\n';
}

}  // namespace skelcover
