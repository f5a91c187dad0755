#ifndef N2M_CAPTURE_HPP_
#define N2M_CAPTURE_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "n2m/geometry.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"
#include "n2m/render.hpp"
#include "n2m/scene.hpp"

namespace n2m {

constexpr double kDefaultFootprintRadius = 0.3;
constexpr int kDefaultMinVisiblePoints = 20;

/// A rendered frame (points in the body frame of `robot`) together with the
/// exact robot pose it was captured from.
struct Frame {
  PointCloud cloud;
  Pose robot;
};

struct CaptureConfig {
  int n_frames = 4;
  Range distance{0.8, 1.6};
  double heading_noise = deg_to_rad(10.0);
  double footprint_radius = kDefaultFootprintRadius;
  int min_visible_points = kDefaultMinVisiblePoints;
  double density = kDefaultSurfaceDensity;
  double voxel_size = kDefaultVoxelSize;
  int max_attempts = 1000;
};

inline bool target_visible(const Scene &scene, const PointCloud &rendered, int min_points) {
  if (min_points <= 0)
    return true;
  return rendered.count_label(scene.target.segment_label) >= static_cast<std::size_t>(min_points);
}

/// Captures frames from collision-free viewpoints on a ring around the target,
/// each facing the target and seeing at least min_visible_points of it.
inline std::vector<Frame> sample_scene_frames(const Scene &scene, const CaptureConfig &cfg,
                                              const CameraIntrinsics &intr, const CameraMount &mount,
                                              std::uint64_t seed) {
  if (cfg.n_frames < 1)
    fail(ErrorCategory::InvalidConfig, "n_frames must be at least 1");
  Rng rng = make_rng(derive_seed(seed, 0xf4a3e));
  const StitchedCloud surface = surface_sample(scene, cfg.density, scene.seed);
  const Eigen::Vector2d target = scene.target.center_xy();

  std::vector<Frame> frames;
  for (int attempt = 0; attempt < cfg.max_attempts && static_cast<int>(frames.size()) < cfg.n_frames; ++attempt) {
    const double phi = uniform(rng, -kPi, kPi);
    const double dist = cfg.distance.sample(rng);
    const Eigen::Vector2d pos = target + dist * Eigen::Vector2d(std::cos(phi), std::sin(phi));
    const Pose robot(pos.x(), pos.y(), phi + kPi + uniform(rng, -cfg.heading_noise, cfg.heading_noise));
    if (collides(scene, robot, cfg.footprint_radius))
      continue;
    PointCloud cloud = render(surface, robot, intr, mount);
    if (!target_visible(scene, cloud, cfg.min_visible_points))
      continue;
    frames.push_back({std::move(cloud), robot});
  }
  if (frames.empty())
    fail(ErrorCategory::PlacementFailure, "no collision-free viewpoint sees the target");
  return frames;
}

namespace detail {

struct VoxelKeyHash {
  std::size_t operator()(const std::array<std::int64_t, 3> &k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k[0]) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(k[1]) * 0xc2b2ae3d27d4eb4fULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k[2]) * 0x165667b19e3779f9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

} // namespace detail

/// Keeps a point only if its voxel is still empty and no kept point lies
/// within voxel_size/2; the first point in input order wins.
inline PointCloud voxel_deduplicate(const PointCloud &in, double voxel_size) {
  if (!(voxel_size > 0.0))
    fail(ErrorCategory::InvalidConfig, "voxel size must be positive");
  using Key = std::array<std::int64_t, 3>;
  std::unordered_map<Key, std::size_t, detail::VoxelKeyHash> occupied;
  occupied.reserve(in.size());
  const double min_dist2 = 0.25 * voxel_size * voxel_size;
  PointCloud out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Eigen::Vector3d &p = in.positions[i];
    const Key key = {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                     static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                     static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    if (occupied.count(key))
      continue;
    bool near = false;
    for (int dx = -1; dx <= 1 && !near; ++dx)
      for (int dy = -1; dy <= 1 && !near; ++dy)
        for (int dz = -1; dz <= 1 && !near; ++dz) {
          const auto it = occupied.find({key[0] + dx, key[1] + dy, key[2] + dz});
          if (it != occupied.end() && (out.positions[it->second] - p).squaredNorm() < min_dist2)
            near = true;
        }
    if (near)
      continue;
    occupied.emplace(key, out.size());
    out.push_back(p, in.colors[i], in.labels[i]);
  }
  return out;
}

/// Transforms every frame into the scene frame and merges them.
inline StitchedCloud stitch(const std::vector<Frame> &frames, double voxel_size = kDefaultVoxelSize) {
  if (frames.empty())
    fail(ErrorCategory::EmptyInput, "stitch needs at least one frame");
  PointCloud merged;
  for (const auto &f : frames)
    merged.append(body_to_world(f.cloud, f.robot));
  return {voxel_deduplicate(merged, voxel_size), voxel_size};
}

inline StitchedCloud capture_scene(const Scene &scene, const CaptureConfig &cfg, const CameraIntrinsics &intr,
                                   const CameraMount &mount, std::uint64_t seed) {
  return stitch(sample_scene_frames(scene, cfg, intr, mount, seed), cfg.voxel_size);
}

} // namespace n2m

#endif // N2M_CAPTURE_HPP_
