#ifndef N2M_DATASET_HPP_
#define N2M_DATASET_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "n2m/capture.hpp"
#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/json_io.hpp"
#include "n2m/ply.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"
#include "n2m/regions.hpp"
#include "n2m/render.hpp"
#include "n2m/scene.hpp"

namespace n2m {

/// One successful rollout: the stitched local reconstruction and the pose the
/// policy succeeded from, both in the scene frame.
struct RawEntry {
  int scene_id = 0;
  StitchedCloud stitched;
  Pose label_pose;
};

/// One ego-centric training pair. Observation and label live in the body
/// frame of `viewpoint` (a scene-frame pose).
struct TrainSample {
  PointCloud observation;
  Pose label;
  int source_scene_id = 0;
  int viewpoint_id = 0;
  Pose viewpoint;
};

struct AugmentConfig {
  int M = 32;
  int min_visible_points = kDefaultMinVisiblePoints;
  double footprint_radius = kDefaultFootprintRadius;
  int n_points = 8192;
  double jitter_max_translation = 1.0;
  double jitter_max_rotation = kPi;
  RandomizationSpec region;
  CameraIntrinsics intr;
  CameraMount mount;

  void validate() const {
    if (M < 1 || n_points < 1 || !(jitter_max_translation >= 0.0) || !(jitter_max_rotation >= 0.0) ||
        !(footprint_radius > 0.0))
      fail(ErrorCategory::InvalidConfig, "augmentation config out of range");
    intr.validate();
  }
};

/// Draws M poses uniformly from the region and keeps those that are
/// collision-free and see the target in a render of the stitched cloud.
inline std::vector<Pose> sample_viewpoints(const Scene &scene, const StitchedCloud &source, const AugmentConfig &cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(derive_seed(seed, 0x71e3));
  std::vector<Pose> kept;
  for (int i = 0; i < cfg.M; ++i) {
    const Pose v = draw_in_square(cfg.region, rng);
    if (collides(scene, v, cfg.footprint_radius))
      continue;
    if (!target_visible(scene, render(source, v, cfg.intr, cfg.mount), cfg.min_visible_points))
      continue;
    kept.push_back(v);
  }
  if (kept.empty())
    fail(ErrorCategory::NoValidViewpoint, "all " + std::to_string(cfg.M) + " candidate viewpoints were filtered");
  return kept;
}

/// Exactly n points: a uniform subsample without replacement when the cloud
/// is large enough, otherwise every input point plus uniform draws with
/// replacement. Input order is preserved for the kept points.
inline PointCloud resample_to_n(const PointCloud &cloud, int n, std::uint64_t seed) {
  if (cloud.empty())
    fail(ErrorCategory::EmptyCloud, "cannot resample an empty cloud");
  if (n < 1)
    fail(ErrorCategory::InvalidConfig, "target point count must be positive");
  Rng rng = make_rng(derive_seed(seed, 0x2e5a));
  const std::size_t size = cloud.size();
  const auto target = static_cast<std::size_t>(n);
  std::vector<std::size_t> idx;
  if (size >= target) {
    std::vector<std::size_t> perm(size);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < target; ++i)
      std::swap(perm[i], perm[i + uniform_index(rng, size - i)]);
    idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(target));
    std::sort(idx.begin(), idx.end());
  } else {
    idx.resize(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (idx.size() < target)
      idx.push_back(uniform_index(rng, size));
  }
  PointCloud out;
  out.reserve(target);
  for (std::size_t i : idx)
    out.push_back(cloud.positions[i], cloud.colors[i], cloud.labels[i]);
  return out;
}

/// Renders the entry's reconstruction from every retained viewpoint and
/// re-expresses the (viewpoint-invariant) label in each viewpoint's body frame.
inline std::vector<TrainSample> augment_entry(const RawEntry &entry, const Scene &scene, const AugmentConfig &cfg,
                                              std::uint64_t seed) {
  const std::vector<Pose> views = sample_viewpoints(scene, entry.stitched, cfg, seed);
  std::vector<TrainSample> out;
  out.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    TrainSample s;
    s.observation = resample_to_n(render(entry.stitched, views[v], cfg.intr, cfg.mount), cfg.n_points,
                                  derive_seed(seed, 0x0b5, v));
    s.label = world_to_ego(entry.label_pose, views[v]);
    s.source_scene_id = entry.scene_id;
    s.viewpoint_id = static_cast<int>(v);
    s.viewpoint = views[v];
    out.push_back(std::move(s));
  }
  return out;
}

/// Random planar rigid motion: rotation uniform in [-max_rot, max_rot],
/// translation uniform in the disc of radius max_translation.
inline Transform2D draw_se2_jitter(const AugmentConfig &cfg, Rng &rng) {
  const double rot = cfg.jitter_max_rotation > 0.0 ? uniform(rng, -cfg.jitter_max_rotation, cfg.jitter_max_rotation) : 0.0;
  Eigen::Vector2d t = Eigen::Vector2d::Zero();
  if (cfg.jitter_max_translation > 0.0) {
    const double r = cfg.jitter_max_translation * std::sqrt(uniform(rng, 0.0, 1.0));
    const double a = uniform(rng, -kPi, kPi);
    t = {r * std::cos(a), r * std::sin(a)};
  }
  return {canonical_angle(rot), t};
}

inline TrainSample apply_transform(const TrainSample &s, const Transform2D &t) {
  TrainSample out;
  out.observation = transformed(s.observation, t);
  out.label = transform_pose(t, s.label);
  out.source_scene_id = s.source_scene_id;
  out.viewpoint_id = s.viewpoint_id;
  out.viewpoint = s.viewpoint;
  return out;
}

struct JitteredSample {
  TrainSample sample;
  Transform2D applied;
};

inline JitteredSample apply_se2_jitter(const TrainSample &s, const AugmentConfig &cfg, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, 0x717));
  const Transform2D t = draw_se2_jitter(cfg, rng);
  if (t.rotation == 0.0 && t.translation.isZero())
    return {s, t};
  return {apply_transform(s, t), t};
}

// ---- on-disk layout --------------------------------------------------------
//
//   manifest.json                         format, version, kind, config, seed, counts
//   raw/<scene_id>/stitched.ply
//   raw/<scene_id>/label.json             pose + frame metadata
//   raw/<scene_id>/scene.json
//   train/<scene_id>_<viewpoint_id>.ply
//   train/<scene_id>_<viewpoint_id>.json  label + viewpoint

constexpr int kDatasetFormatVersion = 1;

struct RawDataset {
  std::vector<RawEntry> entries;
  std::vector<Scene> scenes; // scenes[i] belongs to entries[i]
  json config = json::object();
  std::uint64_t seed = 0;
  int attempts = 0;
};

struct TrainDataset {
  std::vector<TrainSample> samples;
  json config = json::object();
  std::uint64_t seed = 0;
};

inline std::vector<std::string> provenance_comments(const json &config, std::uint64_t seed) {
  return {"seed " + std::to_string(seed), "config " + config.dump()};
}

inline json read_manifest(const std::filesystem::path &dir, const std::string &kind) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path))
    fail(ErrorCategory::EmptyDataset, "no manifest.json in " + dir.string());
  const json m = read_json_file(path);
  if (m.value("format", std::string()) != "n2m-dataset" || m.value("version", 0) != kDatasetFormatVersion)
    fail(ErrorCategory::FormatVersionMismatch, dir.string() + " is not a version-" +
                                                   std::to_string(kDatasetFormatVersion) + " dataset");
  if (m.value("kind", std::string()) != kind)
    fail(ErrorCategory::FormatVersionMismatch, dir.string() + " holds a '" + m.value("kind", std::string()) +
                                                   "' dataset, expected '" + kind + "'");
  return m;
}

inline void save_raw_dataset(const std::filesystem::path &dir, const RawDataset &ds) {
  if (ds.entries.size() != ds.scenes.size())
    fail(ErrorCategory::DimensionMismatch, "raw dataset needs one scene per entry");
  json ids = json::array();
  const auto comments = provenance_comments(ds.config, ds.seed);
  for (std::size_t i = 0; i < ds.entries.size(); ++i) {
    const RawEntry &e = ds.entries[i];
    const auto sub = dir / "raw" / std::to_string(e.scene_id);
    write_ply(sub / "stitched.ply", e.stitched.cloud, comments);
    write_json_file(sub / "label.json", {{"scene_id", e.scene_id},
                                         {"frame", "scene"},
                                         {"label_pose", pose_to_json(e.label_pose)},
                                         {"voxel_size", e.stitched.voxel_size}});
    write_json_file(sub / "scene.json", scene_to_json(ds.scenes[i]));
    ids.push_back(e.scene_id);
  }
  write_json_file(dir / "manifest.json", {{"format", "n2m-dataset"},
                                          {"version", kDatasetFormatVersion},
                                          {"kind", "raw"},
                                          {"config", ds.config},
                                          {"seed", ds.seed},
                                          {"counts", {{"entries", ds.entries.size()}, {"attempts", ds.attempts}}},
                                          {"scene_ids", ids}});
}

inline RawDataset load_raw_dataset(const std::filesystem::path &dir) {
  const json m = read_manifest(dir, "raw");
  RawDataset ds;
  ds.config = m.value("config", json::object());
  ds.seed = m.value("seed", std::uint64_t{0});
  ds.attempts = m.at("counts").value("attempts", 0);
  for (const auto &id : m.at("scene_ids")) {
    const int scene_id = id.get<int>();
    const auto sub = dir / "raw" / std::to_string(scene_id);
    const json label = read_json_file(sub / "label.json");
    RawEntry e;
    e.scene_id = scene_id;
    e.stitched.cloud = read_ply(sub / "stitched.ply").cloud;
    e.stitched.voxel_size = label.value("voxel_size", kDefaultVoxelSize);
    e.label_pose = pose_from_json(label.at("label_pose"));
    ds.entries.push_back(std::move(e));
    ds.scenes.push_back(scene_from_json(read_json_file(sub / "scene.json")));
  }
  return ds;
}

inline std::string sample_name(const TrainSample &s) {
  return std::to_string(s.source_scene_id) + "_" + std::to_string(s.viewpoint_id);
}

inline void save_train_dataset(const std::filesystem::path &dir, const TrainDataset &ds) {
  json names = json::array();
  const auto comments = provenance_comments(ds.config, ds.seed);
  for (const auto &s : ds.samples) {
    const std::string name = sample_name(s);
    write_ply(dir / "train" / (name + ".ply"), s.observation, comments);
    write_json_file(dir / "train" / (name + ".json"), {{"scene_id", s.source_scene_id},
                                                       {"viewpoint_id", s.viewpoint_id},
                                                       {"frame", "body"},
                                                       {"label", pose_to_json(s.label)},
                                                       {"viewpoint", pose_to_json(s.viewpoint)}});
    names.push_back(name);
  }
  write_json_file(dir / "manifest.json", {{"format", "n2m-dataset"},
                                          {"version", kDatasetFormatVersion},
                                          {"kind", "train"},
                                          {"config", ds.config},
                                          {"seed", ds.seed},
                                          {"counts", {{"samples", ds.samples.size()}}},
                                          {"samples", names}});
}

inline TrainDataset load_train_dataset(const std::filesystem::path &dir) {
  const json m = read_manifest(dir, "train");
  TrainDataset ds;
  ds.config = m.value("config", json::object());
  ds.seed = m.value("seed", std::uint64_t{0});
  for (const auto &n : m.at("samples")) {
    const std::string name = n.get<std::string>();
    const json rec = read_json_file(dir / "train" / (name + ".json"));
    TrainSample s;
    s.observation = read_ply(dir / "train" / (name + ".ply")).cloud;
    s.label = pose_from_json(rec.at("label"));
    s.source_scene_id = rec.at("scene_id").get<int>();
    s.viewpoint_id = rec.at("viewpoint_id").get<int>();
    s.viewpoint = pose_from_json(rec.at("viewpoint"));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline json augment_config_to_json(const AugmentConfig &c) {
  return {{"M", c.M},
          {"min_visible_points", c.min_visible_points},
          {"footprint_radius", c.footprint_radius},
          {"n_points", c.n_points},
          {"jitter_max_translation", c.jitter_max_translation},
          {"jitter_max_rotation", c.jitter_max_rotation},
          {"region", region_to_json(c.region)},
          {"intrinsics", intrinsics_to_json(c.intr)},
          {"mount", mount_to_json(c.mount)}};
}

inline AugmentConfig augment_config_from_json(const json &j, AugmentConfig c = {}) {
  c.M = j.value("M", c.M);
  c.min_visible_points = j.value("min_visible_points", c.min_visible_points);
  c.footprint_radius = j.value("footprint_radius", c.footprint_radius);
  c.n_points = j.value("n_points", c.n_points);
  c.jitter_max_translation = j.value("jitter_max_translation", c.jitter_max_translation);
  c.jitter_max_rotation = j.value("jitter_max_rotation", c.jitter_max_rotation);
  if (j.contains("region"))
    c.region = region_from_json(j["region"], c.region);
  if (j.contains("intrinsics"))
    c.intr = intrinsics_from_json(j["intrinsics"]);
  if (j.contains("mount"))
    c.mount = mount_from_json(j["mount"]);
  c.validate();
  return c;
}

} // namespace n2m

#endif // N2M_DATASET_HPP_
