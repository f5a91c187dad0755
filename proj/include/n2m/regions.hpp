#ifndef N2M_REGIONS_HPP_
#define N2M_REGIONS_HPP_

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "n2m/capture.hpp"
#include "n2m/geometry.hpp"
#include "n2m/json_io.hpp"
#include "n2m/random.hpp"
#include "n2m/render.hpp"
#include "n2m/scene.hpp"

// Randomization regions for robot poses:
//   data-collection  0.4 x 0.4 m square about a reference pose, heading +-15 deg
//   reachability     1 x 1 m square about the reference pose intersected with a
//                    1 m disc about the target, heading +-30 deg
//   task-area        2 x 2 m square about the task-area center, heading +-30 deg,
//                    rejected until collision-free and the target is visible
namespace n2m {

enum class RegionKind { DataCollection, Reachability, TaskArea };

inline std::string region_kind_name(RegionKind k) {
  switch (k) {
  case RegionKind::DataCollection: return "data-collection";
  case RegionKind::Reachability: return "reachability";
  case RegionKind::TaskArea: return "task-area";
  }
  return "unknown";
}

inline RegionKind region_kind_from_name(const std::string &s) {
  if (s == "data-collection")
    return RegionKind::DataCollection;
  if (s == "reachability")
    return RegionKind::Reachability;
  if (s == "task-area")
    return RegionKind::TaskArea;
  fail(ErrorCategory::InvalidConfig, "unknown region kind '" + s + "'");
}

struct RandomizationSpec {
  RegionKind kind = RegionKind::TaskArea;
  /// One center per approach side; a draw picks a center uniformly.
  std::vector<Pose> centers{Pose(0.0, 0.85, kPi / 2)};
  double half_size = 1.0;
  double heading_half_range = deg_to_rad(30.0);
  /// Reachability only: maximum distance from the target center.
  double target_radius = 1.0;
  /// Torso height range, drawn only when with_height is set.
  bool with_height = false;
  Range height{0.2, 0.8};
  int max_rejections = 1000;
};

inline RandomizationSpec data_collection_region(const SceneSpec &s, bool with_height = false) {
  RandomizationSpec r;
  r.kind = RegionKind::DataCollection;
  r.centers = s.reference_poses;
  r.half_size = 0.2;
  r.heading_half_range = deg_to_rad(15.0);
  r.with_height = with_height;
  return r;
}

inline RandomizationSpec reachability_region(const SceneSpec &s, bool with_height = false) {
  RandomizationSpec r;
  r.kind = RegionKind::Reachability;
  r.centers = {s.reference_poses.front()};
  r.half_size = 0.5;
  r.heading_half_range = deg_to_rad(30.0);
  r.target_radius = 1.0;
  r.with_height = with_height;
  return r;
}

inline RandomizationSpec task_area_region(const SceneSpec &s, bool with_height = false) {
  RandomizationSpec r;
  r.kind = RegionKind::TaskArea;
  r.centers = {s.task_area_center};
  r.half_size = 1.0;
  r.heading_half_range = deg_to_rad(30.0);
  r.with_height = with_height;
  return r;
}

/// Uniform draw from the square and heading window (no scene filtering).
inline Pose draw_in_square(const RandomizationSpec &spec, Rng &rng) {
  if (spec.centers.empty())
    fail(ErrorCategory::InvalidConfig, "randomization region has no center");
  const Pose &c = spec.centers.size() == 1 ? spec.centers.front() : spec.centers[uniform_index(rng, spec.centers.size())];
  const double dx = uniform(rng, -spec.half_size, spec.half_size);
  const double dy = uniform(rng, -spec.half_size, spec.half_size);
  const double dth = uniform(rng, -spec.heading_half_range, spec.heading_half_range);
  Pose p(c.x + dx, c.y + dy, c.theta + dth);
  if (spec.with_height)
    p.h = spec.height.sample(rng);
  return p;
}

/// Everything needed to decide whether the target is visible from a pose.
struct ViewFilter {
  CameraIntrinsics intr;
  CameraMount mount;
  double footprint_radius = kDefaultFootprintRadius;
  int min_visible_points = kDefaultMinVisiblePoints;
  double density = kDefaultSurfaceDensity;
};

/// Draws one pose from the region for `scene`. Reachability draws are
/// rejected until inside the target disc; task-area draws until
/// collision-free with the target visible in a render of `surface`.
inline Pose sample_pose(const RandomizationSpec &spec, const Scene &scene, const StitchedCloud &surface,
                        const ViewFilter &filter, Rng &rng, int *rejections = nullptr) {
  int rejected = 0;
  for (int attempt = 0; attempt < spec.max_rejections; ++attempt) {
    const Pose p = draw_in_square(spec, rng);
    bool ok = true;
    if (spec.kind == RegionKind::Reachability) {
      ok = (Eigen::Vector2d(p.x, p.y) - scene.target.center_xy()).norm() <= spec.target_radius;
    } else if (spec.kind == RegionKind::TaskArea) {
      ok = !collides(scene, p, filter.footprint_radius) &&
           target_visible(scene, render(surface, p, filter.intr, filter.mount), filter.min_visible_points);
    }
    if (ok) {
      if (rejections)
        *rejections = rejected;
      return p;
    }
    ++rejected;
  }
  fail(ErrorCategory::RegionEmpty, region_kind_name(spec.kind) + " region produced no valid pose after " +
                                       std::to_string(spec.max_rejections) + " draws");
}

inline Pose sample_pose(const RandomizationSpec &spec, const Scene &scene, const ViewFilter &filter,
                        std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, 0x5e1ec7));
  const StitchedCloud surface =
      spec.kind == RegionKind::TaskArea ? surface_sample(scene, filter.density, scene.seed) : StitchedCloud{};
  return sample_pose(spec, scene, surface, filter, rng);
}

inline json region_to_json(const RandomizationSpec &r) {
  json centers = json::array();
  for (const auto &c : r.centers)
    centers.push_back(pose_to_json(c));
  return {{"kind", region_kind_name(r.kind)},
          {"centers", centers},
          {"half_size", r.half_size},
          {"heading_half_range", r.heading_half_range},
          {"target_radius", r.target_radius},
          {"with_height", r.with_height},
          {"height", range_to_json(r.height)},
          {"max_rejections", r.max_rejections}};
}

inline RandomizationSpec region_from_json(const json &j, RandomizationSpec r = {}) {
  if (j.contains("kind"))
    r.kind = region_kind_from_name(j["kind"].get<std::string>());
  if (j.contains("centers")) {
    r.centers.clear();
    for (const auto &c : j["centers"])
      r.centers.push_back(pose_from_json(c));
  }
  r.half_size = j.value("half_size", r.half_size);
  r.heading_half_range = j.value("heading_half_range", r.heading_half_range);
  r.target_radius = j.value("target_radius", r.target_radius);
  r.with_height = j.value("with_height", r.with_height);
  if (j.contains("height"))
    r.height = range_from_json(j["height"]);
  r.max_rejections = j.value("max_rejections", r.max_rejections);
  if (!(r.half_size > 0.0) || r.max_rejections < 1)
    fail(ErrorCategory::InvalidConfig, "randomization region must be non-empty");
  return r;
}

} // namespace n2m

#endif // N2M_REGIONS_HPP_
