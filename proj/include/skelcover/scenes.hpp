#ifndef SKELCOVER_SCENES_HPP
#define SKELCOVER_SCENES_HPP

#include "skelcover/types.hpp"

#include <functional>
#include <random>

namespace skelcover {

enum class SceneKind { Cylinder, PipeNetwork, YTube, Torus, WallGap, Tower };

SceneKind scene_kind_from_string(const std::string& name);
std::string to_string(SceneKind kind);

struct SceneParams {
  double radius = 1.0;       // tube / minor radius
  double length = 10.0;      // main extent
  double major_radius = 3.0; // torus only
  int num_points = 20000;
  double noise_sigma = 0.0;
};

struct SceneGroundTruth {
  // Analytic skeleton as straight segments (world frame).
  std::vector<std::pair<Vec3, Vec3>> skeleton_segments;
  // Per-point structural labels; empty when the scene has no natural
  // branch labeling.
  std::vector<int> point_labels;
  // Membership test for the enclosed volume (strictly inside the surface).
  std::function<bool(const Vec3&)> inside;
  int expected_joints = 0;
  int expected_leaves = 0;
  bool expect_cycle = false;

  double axis_distance(const Vec3& p) const {
    double best = kInf;
    for (const auto& [a, b] : skeleton_segments)
      best = std::min(best, point_segment_distance(p, a, b));
    return best;
  }
};

struct SyntheticScene {
  PointCloud cloud;
  SceneGroundTruth truth;
};

SyntheticScene synth_scene(SceneKind kind, const SceneParams& params,
                           std::uint64_t seed);

// Surface-sampled open tube around the segment a->b. Exposed so tests can
// compose multi-tube scenes with known labels.
PointCloud sample_tube(const Vec3& a, const Vec3& b, double radius, int n,
                       double sigma, std::mt19937_64& rng);

}  // namespace skelcover

#endif
