#ifndef N2M_SCENE_HPP_
#define N2M_SCENE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/json_io.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"

namespace n2m {

/// Yawed box resting in the world. The box's local +x axis is its "front".
struct Box {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d extents = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  Eigen::Vector3d color{0.5, 0.5, 0.5};
  int segment_label = kFirstObstacleLabel;

  double z_min() const { return center.z() - 0.5 * extents.z(); }
  double z_max() const { return center.z() + 0.5 * extents.z(); }

  Eigen::Vector2d center_xy() const { return {center.x(), center.y()}; }

  /// Ground-plane footprint corners, counter-clockwise.
  std::array<Eigen::Vector2d, 4> footprint() const {
    const Transform2D t{yaw, center_xy()};
    const double hx = 0.5 * extents.x(), hy = 0.5 * extents.y();
    return {t.apply(Eigen::Vector2d(hx, hy)), t.apply(Eigen::Vector2d(-hx, hy)),
            t.apply(Eigen::Vector2d(-hx, -hy)), t.apply(Eigen::Vector2d(hx, -hy))};
  }

  /// Planar distance from a point to the footprint rectangle (0 inside).
  double footprint_distance(const Eigen::Vector2d &p) const {
    const Eigen::Vector2d local = Transform2D{yaw, center_xy()}.rotation_matrix().transpose() * (p - center_xy());
    const double dx = std::max(std::abs(local.x()) - 0.5 * extents.x(), 0.0);
    const double dy = std::max(std::abs(local.y()) - 0.5 * extents.y(), 0.0);
    return std::hypot(dx, dy);
  }

  bool contains_strict(const Eigen::Vector3d &p) const {
    const Eigen::Vector2d local =
        Transform2D{yaw, center_xy()}.rotation_matrix().transpose() * (Eigen::Vector2d(p.x(), p.y()) - center_xy());
    return std::abs(local.x()) < 0.5 * extents.x() && std::abs(local.y()) < 0.5 * extents.y() && p.z() > z_min() &&
           p.z() < z_max();
  }

  bool operator==(const Box &) const = default;
};

struct Bounds {
  double xmin = -3.0;
  double xmax = 3.0;
  double ymin = -3.0;
  double ymax = 3.0;

  bool contains(const Eigen::Vector2d &p) const { return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax; }
  Eigen::Vector2d center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool operator==(const Bounds &) const = default;
};

struct Scene {
  Bounds bounds;
  std::vector<Box> obstacles;
  Box target;
  std::uint64_t seed = 0;

  bool operator==(const Scene &) const = default;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng &rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
};

struct RandomObstacleSpec {
  int count_min = 0;
  int count_max = 0;
  Range size_xy{0.3, 0.8};
  Range height{0.4, 1.2};
  /// Obstacles keep their whole footprint outside this disc around the nominal target.
  double keepout_radius = 1.2;
};

struct TargetSpec {
  Eigen::Vector2d nominal_xy{0.0, 1.45};
  Range offset_x{-0.3, 0.3};
  Range offset_y{-0.05, 0.05};
  double base_z = 0.9;
  double nominal_yaw = -kPi / 2;
  double yaw_jitter = deg_to_rad(10.0);
  Range extent_xy{0.2, 0.3};
  Range extent_z{0.2, 0.35};
  Eigen::Vector3d color_lo{0.75, 0.05, 0.05};
  Eigen::Vector3d color_hi{1.0, 0.35, 0.2};
};

/// Generator recipe for a family of scenes. Fixed furniture is copied into
/// every scene; random obstacles are drawn from `layout_seed` when set (so a
/// layout stays fixed while the target is re-randomized per seed), otherwise
/// from the per-scene seed.
struct SceneSpec {
  Bounds bounds;
  std::vector<Box> furniture;
  RandomObstacleSpec random_obstacles;
  std::optional<std::uint64_t> layout_seed;
  TargetSpec target;
  /// Fixed reference poses (one per approach side) used by the baselines and
  /// as centers of the randomization regions.
  std::vector<Pose> reference_poses{Pose(0.0, 0.85, kPi / 2)};
  Pose task_area_center{0.0, 0.85, kPi / 2};
};

namespace detail {

inline bool footprints_overlap(const Box &a, const Box &b) {
  const auto ca = a.footprint(), cb = b.footprint();
  const std::array<Eigen::Vector2d, 4> axes = {
      Eigen::Vector2d(std::cos(a.yaw), std::sin(a.yaw)), Eigen::Vector2d(-std::sin(a.yaw), std::cos(a.yaw)),
      Eigen::Vector2d(std::cos(b.yaw), std::sin(b.yaw)), Eigen::Vector2d(-std::sin(b.yaw), std::cos(b.yaw))};
  for (const auto &axis : axes) {
    double amin = INFINITY, amax = -INFINITY, bmin = INFINITY, bmax = -INFINITY;
    for (int i = 0; i < 4; ++i) {
      const double pa = axis.dot(ca[i]), pb = axis.dot(cb[i]);
      amin = std::min(amin, pa);
      amax = std::max(amax, pa);
      bmin = std::min(bmin, pb);
      bmax = std::max(bmax, pb);
    }
    // touching faces do not count as overlap
    if (amax <= bmin + 1e-12 || bmax <= amin + 1e-12)
      return false;
  }
  return true;
}

} // namespace detail

/// True when the open interiors of two boxes intersect.
inline bool boxes_intersect(const Box &a, const Box &b) {
  if (a.z_max() <= b.z_min() + 1e-12 || b.z_max() <= a.z_min() + 1e-12)
    return false;
  return detail::footprints_overlap(a, b);
}

inline bool footprint_within(const Box &b, const Bounds &bounds) {
  for (const auto &c : b.footprint())
    if (!bounds.contains(c))
      return false;
  return true;
}

inline Scene generate_scene(const SceneSpec &spec, std::uint64_t seed) {
  Scene scene;
  scene.bounds = spec.bounds;
  scene.seed = seed;
  scene.obstacles = spec.furniture;
  int next_label = kFirstObstacleLabel;
  for (auto &b : scene.obstacles) {
    if ((b.extents.array() <= 0.0).any())
      fail(ErrorCategory::InvalidConfig, "furniture boxes need positive extents");
    b.segment_label = next_label++;
  }

  const auto &ro = spec.random_obstacles;
  if (ro.count_max > 0) {
    Rng layout_rng = make_rng(spec.layout_seed ? derive_seed(*spec.layout_seed, 0x1a70) : derive_seed(seed, 0x1a70));
    const int span = ro.count_max - ro.count_min + 1;
    const int count = ro.count_min + static_cast<int>(uniform_index(layout_rng, static_cast<std::size_t>(std::max(span, 1))));
    for (int i = 0; i < count; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
        Box b;
        b.extents = {ro.size_xy.sample(layout_rng), ro.size_xy.sample(layout_rng), ro.height.sample(layout_rng)};
        b.yaw = uniform(layout_rng, -kPi / 2, kPi / 2);
        b.center = {uniform(layout_rng, spec.bounds.xmin, spec.bounds.xmax),
                    uniform(layout_rng, spec.bounds.ymin, spec.bounds.ymax), 0.5 * b.extents.z()};
        const double g = uniform(layout_rng, 0.35, 0.7);
        b.color = {g, g * uniform(layout_rng, 0.9, 1.05), g * uniform(layout_rng, 0.85, 1.0)};
        if (!footprint_within(b, spec.bounds))
          continue;
        if (b.footprint_distance(spec.target.nominal_xy) < ro.keepout_radius)
          continue;
        b.segment_label = next_label;
        scene.obstacles.push_back(b);
        placed = true;
      }
      if (!placed)
        fail(ErrorCategory::PlacementFailure, "could not place random obstacle");
      ++next_label;
    }
  }

  Rng target_rng = make_rng(derive_seed(seed, 0x7a67));
  const auto &ts = spec.target;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Box t;
    t.extents = {ts.extent_xy.sample(target_rng), ts.extent_xy.sample(target_rng), ts.extent_z.sample(target_rng)};
    t.yaw = canonical_angle(ts.nominal_yaw + uniform(target_rng, -ts.yaw_jitter, ts.yaw_jitter));
    t.center = {ts.nominal_xy.x() + ts.offset_x.sample(target_rng), ts.nominal_xy.y() + ts.offset_y.sample(target_rng),
                ts.base_z + 0.5 * t.extents.z()};
    for (int c = 0; c < 3; ++c)
      t.color[c] = uniform(target_rng, ts.color_lo[c], ts.color_hi[c]);
    t.segment_label = kTargetLabel;
    if (!footprint_within(t, spec.bounds))
      continue;
    const bool clear = std::none_of(scene.obstacles.begin(), scene.obstacles.end(),
                                    [&](const Box &o) { return boxes_intersect(o, t); });
    if (!clear)
      continue;
    scene.target = t;
    return scene;
  }
  fail(ErrorCategory::PlacementFailure, "no non-overlapping target placement in 1000 attempts");
}

/// Disc footprint at (x, y) against every box footprint (target included) and
/// the scene bounds. Contact at exactly the radius is not a collision.
inline bool collides(const Scene &scene, const Pose &pose, double footprint_radius) {
  if (!(footprint_radius > 0.0))
    fail(ErrorCategory::InvalidConfig, "footprint radius must be positive");
  const Eigen::Vector2d p(pose.x, pose.y);
  const auto &b = scene.bounds;
  if (p.x() - footprint_radius < b.xmin || p.x() + footprint_radius > b.xmax || p.y() - footprint_radius < b.ymin ||
      p.y() + footprint_radius > b.ymax)
    return true;
  if (scene.target.footprint_distance(p) < footprint_radius)
    return true;
  for (const auto &o : scene.obstacles)
    if (o.footprint_distance(p) < footprint_radius)
      return true;
  return false;
}

// ---- serialization -------------------------------------------------------

inline json box_to_json(const Box &b) {
  return {{"center", {b.center.x(), b.center.y(), b.center.z()}},
          {"extents", {b.extents.x(), b.extents.y(), b.extents.z()}},
          {"yaw", b.yaw},
          {"color", {b.color.x(), b.color.y(), b.color.z()}},
          {"segment_label", b.segment_label}};
}

inline Box box_from_json(const json &j) {
  Box b;
  b.center = vec3_from_json(j.at("center"));
  b.extents = vec3_from_json(j.at("extents"));
  b.yaw = j.value("yaw", 0.0);
  if (j.contains("color"))
    b.color = vec3_from_json(j["color"]);
  b.segment_label = j.value("segment_label", kFirstObstacleLabel);
  if ((b.extents.array() <= 0.0).any())
    fail(ErrorCategory::InvalidConfig, "box extents must be positive");
  return b;
}

inline json bounds_to_json(const Bounds &b) {
  return {{"xmin", b.xmin}, {"xmax", b.xmax}, {"ymin", b.ymin}, {"ymax", b.ymax}};
}

inline Bounds bounds_from_json(const json &j) {
  Bounds b;
  b.xmin = j.at("xmin").get<double>();
  b.xmax = j.at("xmax").get<double>();
  b.ymin = j.at("ymin").get<double>();
  b.ymax = j.at("ymax").get<double>();
  if (!(b.xmin < b.xmax && b.ymin < b.ymax))
    fail(ErrorCategory::InvalidConfig, "empty scene bounds");
  return b;
}

inline json scene_to_json(const Scene &s) {
  json obstacles = json::array();
  for (const auto &o : s.obstacles)
    obstacles.push_back(box_to_json(o));
  return {{"format", "n2m-scene"}, {"version", 1},           {"seed", s.seed},
          {"bounds", bounds_to_json(s.bounds)},               {"obstacles", obstacles},
          {"target", box_to_json(s.target)}};
}

inline Scene scene_from_json(const json &j) {
  if (j.value("format", std::string()) != "n2m-scene" || j.value("version", 0) != 1)
    fail(ErrorCategory::FormatVersionMismatch, "not a version-1 scene record");
  Scene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.bounds = bounds_from_json(j.at("bounds"));
  for (const auto &o : j.at("obstacles"))
    s.obstacles.push_back(box_from_json(o));
  s.target = box_from_json(j.at("target"));
  return s;
}

inline json range_to_json(const Range &r) { return json::array({r.lo, r.hi}); }
inline Range range_from_json(const json &j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json scene_spec_to_json(const SceneSpec &s) {
  json furniture = json::array();
  for (const auto &b : s.furniture)
    furniture.push_back(box_to_json(b));
  json refs = json::array();
  for (const auto &p : s.reference_poses)
    refs.push_back(pose_to_json(p));
  const auto &t = s.target;
  json j = {{"bounds", bounds_to_json(s.bounds)},
            {"furniture", furniture},
            {"random_obstacles",
             {{"count_min", s.random_obstacles.count_min},
              {"count_max", s.random_obstacles.count_max},
              {"size_xy", range_to_json(s.random_obstacles.size_xy)},
              {"height", range_to_json(s.random_obstacles.height)},
              {"keepout_radius", s.random_obstacles.keepout_radius}}},
            {"target",
             {{"nominal_xy", {t.nominal_xy.x(), t.nominal_xy.y()}},
              {"offset_x", range_to_json(t.offset_x)},
              {"offset_y", range_to_json(t.offset_y)},
              {"base_z", t.base_z},
              {"nominal_yaw", t.nominal_yaw},
              {"yaw_jitter", t.yaw_jitter},
              {"extent_xy", range_to_json(t.extent_xy)},
              {"extent_z", range_to_json(t.extent_z)},
              {"color_lo", {t.color_lo.x(), t.color_lo.y(), t.color_lo.z()}},
              {"color_hi", {t.color_hi.x(), t.color_hi.y(), t.color_hi.z()}}}},
            {"reference_poses", refs},
            {"task_area_center", pose_to_json(s.task_area_center)}};
  if (s.layout_seed)
    j["layout_seed"] = *s.layout_seed;
  return j;
}

inline SceneSpec scene_spec_from_json(const json &j) {
  SceneSpec s;
  if (j.contains("bounds"))
    s.bounds = bounds_from_json(j["bounds"]);
  if (j.contains("furniture"))
    for (const auto &b : j["furniture"])
      s.furniture.push_back(box_from_json(b));
  if (j.contains("random_obstacles")) {
    const auto &r = j["random_obstacles"];
    auto &ro = s.random_obstacles;
    ro.count_min = r.value("count_min", ro.count_min);
    ro.count_max = r.value("count_max", ro.count_max);
    if (r.contains("size_xy"))
      ro.size_xy = range_from_json(r["size_xy"]);
    if (r.contains("height"))
      ro.height = range_from_json(r["height"]);
    ro.keepout_radius = r.value("keepout_radius", ro.keepout_radius);
    if (ro.count_min < 0 || ro.count_max < ro.count_min)
      fail(ErrorCategory::InvalidConfig, "random obstacle count range is invalid");
  }
  if (j.contains("layout_seed"))
    s.layout_seed = j["layout_seed"].get<std::uint64_t>();
  if (j.contains("target")) {
    const auto &t = j["target"];
    auto &ts = s.target;
    if (t.contains("nominal_xy"))
      ts.nominal_xy = {t["nominal_xy"][0].get<double>(), t["nominal_xy"][1].get<double>()};
    if (t.contains("offset_x"))
      ts.offset_x = range_from_json(t["offset_x"]);
    if (t.contains("offset_y"))
      ts.offset_y = range_from_json(t["offset_y"]);
    ts.base_z = t.value("base_z", ts.base_z);
    ts.nominal_yaw = t.value("nominal_yaw", ts.nominal_yaw);
    ts.yaw_jitter = t.value("yaw_jitter", ts.yaw_jitter);
    if (t.contains("extent_xy"))
      ts.extent_xy = range_from_json(t["extent_xy"]);
    if (t.contains("extent_z"))
      ts.extent_z = range_from_json(t["extent_z"]);
    if (t.contains("color_lo"))
      ts.color_lo = vec3_from_json(t["color_lo"]);
    if (t.contains("color_hi"))
      ts.color_hi = vec3_from_json(t["color_hi"]);
  }
  if (j.contains("reference_poses")) {
    s.reference_poses.clear();
    for (const auto &p : j["reference_poses"])
      s.reference_poses.push_back(pose_from_json(p));
  }
  if (s.reference_poses.empty())
    fail(ErrorCategory::InvalidConfig, "scene spec needs at least one reference pose");
  if (j.contains("task_area_center"))
    s.task_area_center = pose_from_json(j["task_area_center"]);
  else
    s.task_area_center = s.reference_poses.front();
  return s;
}

} // namespace n2m

#endif // N2M_SCENE_HPP_
