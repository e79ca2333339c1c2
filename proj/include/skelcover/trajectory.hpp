#pragma once

#include "skelcover/planner.hpp"

#include <array>
#include <iosfwd>
#include <vector>

namespace skelcover {

struct Aabb {
  Vec3 min{Vec3::Zero()};
  Vec3 max{Vec3::Zero()};

  bool contains(const Vec3& p, double tol = 0.0) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < min[a] - tol || p[a] > max[a] + tol) return false;
    return true;
  }
};

// Safe flight corridor: overlapping axis-aligned boxes, one assigned to
// each trajectory piece. No box admits an occupied voxel center within the
// clearance margin it was built with.
struct Corridor {
  std::vector<Aabb> boxes;
  std::vector<int> piece_assignment;
};

// Greedily inflates boxes around consecutive runs of path waypoints, each
// face expanding in voxel steps until blocked by an obstacle (within
// clearance), the extent cap, or the grid bounds. Throws "corridor
// failure" when a waypoint cannot seed a valid box or a piece cannot be
// contained.
Corridor build_corridors(const CoveragePath& path, const OccupancyGrid& grid,
                         double clearance, double max_extent = 32.0);

// One quintic per channel (x, y, z, pitch, yaw) over t in [0, duration];
// coefficient k multiplies t^k.
struct TrajPiece {
  double duration = 0.0;
  std::array<std::array<double, 6>, 5> coeffs{};

  double value(int ch, double t) const;
  double rate(int ch, double t) const;
  double accel(int ch, double t) const;
  double jerk(int ch, double t) const;
  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
  Vec3 jerk_vec(double t) const;
};

struct Trajectory {
  std::vector<TrajPiece> pieces;
  double total_time = 0.0;
};

// Waypoint chain the pieces interpolate: the start pose followed by every
// safe-path waypoint of every leg.
std::vector<Vec3> path_waypoints(const CoveragePath& path);

// Per-waypoint {pitch, yaw} targets. Viewpoint waypoints carry their own
// gimbal state, intermediate waypoints interpolate by arc length, the pose
// takes the first viewpoint's angles, and yaw is unwrapped into a
// continuous sequence (junction steps never exceed pi).
std::vector<std::array<double, 2>> path_gimbal_targets(const CoveragePath& path);

// Quintic pieces with Catmull-Rom junction velocities (capped at
// 0.8 v_max, zero at the ends, projected into the adjacent boxes) and
// zero junction accelerations, so junctions are C2 by construction.
// Durations start from trapezoidal timing; any sampled violation of
// speed, acceleration, jerk, gimbal rate, or corridor containment
// reparametrizes every piece by 1.1x (cap 100 rounds), which never
// changes the flown geometry. Piece fitting is concurrent and
// worker-count invariant.
Trajectory generate_trajectory(const CoveragePath& path, const Corridor& corridor,
                               const DynamicLimits& limits, int workers = 1);

struct FeasibilityReport {
  double max_speed = 0.0;
  double max_accel = 0.0;
  double max_jerk = 0.0;
  double max_gimbal_rate = 0.0;
  double max_corridor_violation = 0.0;
  double max_continuity_residual = 0.0;
  double max_waypoint_error = 0.0;
  bool velocity_ok = false;
  bool accel_ok = false;
  bool jerk_ok = false;
  bool gimbal_ok = false;
  bool corridor_ok = false;
  bool continuity_ok = false;
  bool waypoints_ok = false;

  bool pass() const {
    return velocity_ok && accel_ok && jerk_ok && gimbal_ok && corridor_ok &&
           continuity_ok && waypoints_ok;
  }
};

// Independent checker: re-derives derivatives, samples every piece at
// rate_hz (floored at one sample per millisecond of piece time), and
// reports maxima plus junction and waypoint residuals. Tolerance 1e-6 on
// every limit.
FeasibilityReport validate_trajectory(const Trajectory& traj, const Corridor& corridor,
                                      const DynamicLimits& limits,
                                      const CoveragePath& path,
                                      double rate_hz = 1000.0, int workers = 1);

// t,x,y,z,pitch,yaw,vx,vy,vz sampled at rate_hz across the whole horizon.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj, double rate_hz);

// Per piece: duration plus 6 coefficients for each of the 5 channels.
void write_trajectory_json(std::ostream& os, const Trajectory& traj);

}  // namespace skelcover
