#ifndef N2M_HARNESS_HPP_
#define N2M_HARNESS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "n2m/capture.hpp"
#include "n2m/dataset.hpp"
#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/json_io.hpp"
#include "n2m/loss.hpp"
#include "n2m/model.hpp"
#include "n2m/regions.hpp"
#include "n2m/scene.hpp"
#include "n2m/train.hpp"
#include "n2m/transition.hpp"

namespace n2m {

// ---- synthetic success oracle ---------------------------------------------

/// Geometric stand-in for a manipulation policy: success iff the base is at a
/// working distance from the target, faces it, stands inside an approach
/// sector on the target's front (or front and back when two-sided) and, for
/// 4-D poses, has the torso at the right height.
struct OracleSpec {
  double r_lo = 0.3;
  double r_hi = 0.7;
  double bearing_tolerance = deg_to_rad(20.0);
  double sector_half_width = deg_to_rad(30.0);
  bool two_sided = false;
  bool with_height = false;
  /// Height band center is target top + height_offset.
  double height_offset = -0.5;
  double height_half_width = 0.1;

  void validate() const {
    if (!(r_lo >= 0.0 && r_lo < r_hi))
      fail(ErrorCategory::InvalidConfig, "oracle distance band needs 0 <= r_lo < r_hi");
    if (!(bearing_tolerance > 0.0 && bearing_tolerance < kPi))
      fail(ErrorCategory::InvalidConfig, "bearing tolerance must lie in (0, pi)");
    if (!(sector_half_width > 0.0 && sector_half_width <= kPi))
      fail(ErrorCategory::InvalidConfig, "sector half width must lie in (0, pi]");
    if (!(height_half_width > 0.0))
      fail(ErrorCategory::InvalidConfig, "height band must be non-empty");
  }
};

inline double oracle_height_center(const Scene &scene, const OracleSpec &spec) {
  return scene.target.z_max() + spec.height_offset;
}

inline bool oracle_success(const Scene &scene, const Pose &pose, const OracleSpec &spec) {
  const Eigen::Vector2d c = scene.target.center_xy();
  const Eigen::Vector2d to_target = c - Eigen::Vector2d(pose.x, pose.y);
  const double dist = to_target.norm();
  if (dist < spec.r_lo || dist > spec.r_hi)
    return false;
  const double bearing = canonical_angle(std::atan2(to_target.y(), to_target.x()) - pose.theta);
  if (std::abs(bearing) > spec.bearing_tolerance)
    return false;
  const double approach = std::atan2(-to_target.y(), -to_target.x());
  bool in_sector = std::abs(canonical_angle(approach - scene.target.yaw)) <= spec.sector_half_width;
  if (!in_sector && spec.two_sided)
    in_sector = std::abs(canonical_angle(approach - scene.target.yaw - kPi)) <= spec.sector_half_width;
  if (!in_sector)
    return false;
  if (spec.with_height) {
    if (!pose.h)
      return false;
    if (std::abs(*pose.h - oracle_height_center(scene, spec)) > spec.height_half_width)
      return false;
  }
  return true;
}

inline json oracle_to_json(const OracleSpec &o) {
  return {{"r_lo", o.r_lo},
          {"r_hi", o.r_hi},
          {"bearing_tolerance", o.bearing_tolerance},
          {"sector_half_width", o.sector_half_width},
          {"sides", o.two_sided ? "two-sided" : "one-sided"},
          {"with_height", o.with_height},
          {"height_offset", o.height_offset},
          {"height_half_width", o.height_half_width}};
}

inline OracleSpec oracle_from_json(const json &j, OracleSpec o = {}) {
  o.r_lo = j.value("r_lo", o.r_lo);
  o.r_hi = j.value("r_hi", o.r_hi);
  o.bearing_tolerance = j.value("bearing_tolerance", o.bearing_tolerance);
  o.sector_half_width = j.value("sector_half_width", o.sector_half_width);
  if (j.contains("sides")) {
    const auto s = j["sides"].get<std::string>();
    if (s != "one-sided" && s != "two-sided")
      fail(ErrorCategory::InvalidConfig, "sides must be 'one-sided' or 'two-sided'");
    o.two_sided = s == "two-sided";
  }
  o.with_height = j.value("with_height", o.with_height);
  o.height_offset = j.value("height_offset", o.height_offset);
  o.height_half_width = j.value("height_half_width", o.height_half_width);
  o.validate();
  return o;
}

// ---- task definitions -----------------------------------------------------

/// Everything that defines one synthetic task.
struct TaskSetup {
  std::string name = "standard";
  SceneSpec scene;
  OracleSpec oracle;
  RandomizationSpec collection;
  RandomizationSpec reachability;
  RandomizationSpec task_area;
  CaptureConfig capture;
  ViewFilter view;
  SelectionConfig selection;

  bool with_height() const { return oracle.with_height; }
  int pose_dim() const { return with_height() ? 4 : 3; }
};

inline Box make_box(Eigen::Vector3d center, Eigen::Vector3d extents, Eigen::Vector3d color, double yaw = 0.0) {
  Box b;
  b.center = center;
  b.extents = extents;
  b.color = color;
  b.yaw = yaw;
  return b;
}

inline TaskSetup make_task(std::string name, SceneSpec scene, OracleSpec oracle) {
  TaskSetup t;
  t.name = std::move(name);
  t.scene = std::move(scene);
  t.oracle = oracle;
  t.collection = data_collection_region(t.scene, oracle.with_height);
  t.reachability = reachability_region(t.scene, oracle.with_height);
  t.task_area = task_area_region(t.scene, oracle.with_height);
  return t;
}

/// Object on a counter, approached from one side (pick-from-counter analog).
inline TaskSetup standard_task(bool with_height = false) {
  SceneSpec s;
  s.bounds = {-3.0, 3.0, -2.5, 2.5};
  s.furniture = {make_box({0.0, 1.6, 0.45}, {3.0, 0.6, 0.9}, {0.55, 0.42, 0.3}),
                 make_box({-1.6, 0.2, 0.375}, {0.8, 0.8, 0.75}, {0.45, 0.35, 0.25}),
                 make_box({1.7, 0.6, 0.75}, {0.6, 0.6, 1.5}, {0.8, 0.8, 0.78})};
  s.random_obstacles = {0, 2, {0.3, 0.6}, {0.4, 1.0}, 1.2};
  s.reference_poses = {Pose(0.0, 0.85, kPi / 2)};
  s.task_area_center = Pose(0.0, 0.85, kPi / 2);
  OracleSpec o;
  o.with_height = with_height;
  if (with_height)
    for (auto &p : s.reference_poses)
      p.h = s.target.base_z + 0.5 * (s.target.extent_z.lo + s.target.extent_z.hi) + o.height_offset;
  return make_task(with_height ? "standard-height" : "standard", s, o);
}

/// Freestanding object approachable from its front or back (two-sided analog).
inline TaskSetup two_sided_task() {
  SceneSpec s;
  s.bounds = {-3.0, 3.0, -2.5, 2.5};
  s.furniture = {make_box({-2.2, 1.8, 0.5}, {0.8, 0.8, 1.0}, {0.5, 0.5, 0.55}),
                 make_box({2.2, 1.8, 0.5}, {0.8, 0.8, 1.0}, {0.5, 0.5, 0.55})};
  s.target.nominal_xy = {0.0, 1.2};
  s.target.offset_x = {-0.1, 0.1};
  s.target.offset_y = {-0.1, 0.1};
  s.target.base_z = 0.0;
  s.target.nominal_yaw = 0.0;
  s.target.yaw_jitter = deg_to_rad(5.0);
  s.target.extent_xy = {0.3, 0.4};
  s.target.extent_z = {0.6, 0.8};
  s.reference_poses = {Pose(0.55, 1.2, kPi), Pose(-0.55, 1.2, 0.0)};
  s.task_area_center = Pose(0.0, 0.2, kPi / 2);
  OracleSpec o;
  o.two_sided = true;
  TaskSetup t = make_task("two-sided", s, o);
  return t;
}

inline TaskSetup task_preset(const std::string &name) {
  if (name == "standard")
    return standard_task(false);
  if (name == "standard-height")
    return standard_task(true);
  if (name == "two-sided")
    return two_sided_task();
  fail(ErrorCategory::InvalidConfig, "unknown task preset '" + name + "'");
}

inline json capture_config_to_json(const CaptureConfig &c) {
  return {{"n_frames", c.n_frames},
          {"distance", range_to_json(c.distance)},
          {"heading_noise", c.heading_noise},
          {"footprint_radius", c.footprint_radius},
          {"min_visible_points", c.min_visible_points},
          {"density", c.density},
          {"voxel_size", c.voxel_size},
          {"max_attempts", c.max_attempts}};
}

inline CaptureConfig capture_config_from_json(const json &j, CaptureConfig c = {}) {
  c.n_frames = j.value("n_frames", c.n_frames);
  if (j.contains("distance"))
    c.distance = range_from_json(j["distance"]);
  c.heading_noise = j.value("heading_noise", c.heading_noise);
  c.footprint_radius = j.value("footprint_radius", c.footprint_radius);
  c.min_visible_points = j.value("min_visible_points", c.min_visible_points);
  c.density = j.value("density", c.density);
  c.voxel_size = j.value("voxel_size", c.voxel_size);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  return c;
}

inline json view_filter_to_json(const ViewFilter &v) {
  return {{"intrinsics", intrinsics_to_json(v.intr)},
          {"mount", mount_to_json(v.mount)},
          {"footprint_radius", v.footprint_radius},
          {"min_visible_points", v.min_visible_points},
          {"density", v.density}};
}

inline ViewFilter view_filter_from_json(const json &j, ViewFilter v = {}) {
  if (j.contains("intrinsics"))
    v.intr = intrinsics_from_json(j["intrinsics"]);
  if (j.contains("mount"))
    v.mount = mount_from_json(j["mount"]);
  v.footprint_radius = j.value("footprint_radius", v.footprint_radius);
  v.min_visible_points = j.value("min_visible_points", v.min_visible_points);
  v.density = j.value("density", v.density);
  return v;
}

inline json task_to_json(const TaskSetup &t) {
  return {{"name", t.name},
          {"scene", scene_spec_to_json(t.scene)},
          {"oracle", oracle_to_json(t.oracle)},
          {"regions",
           {{"data_collection", region_to_json(t.collection)},
            {"reachability", region_to_json(t.reachability)},
            {"task_area", region_to_json(t.task_area)}}},
          {"capture", capture_config_to_json(t.capture)},
          {"view", view_filter_to_json(t.view)},
          {"selection", selection_config_to_json(t.selection)}};
}

/// A task record may name a preset ("preset": "two-sided") and override any part of it.
inline TaskSetup task_from_json(const json &j) {
  TaskSetup t = task_preset(j.value("preset", std::string("standard")));
  if (j.contains("name"))
    t.name = j["name"].get<std::string>();
  if (j.contains("scene") || j.contains("oracle")) {
    const SceneSpec s = j.contains("scene") ? scene_spec_from_json(j["scene"]) : t.scene;
    const OracleSpec o = j.contains("oracle") ? oracle_from_json(j["oracle"], t.oracle) : t.oracle;
    t = make_task(t.name, s, o);
  }
  if (j.contains("regions")) {
    const auto &r = j["regions"];
    if (r.contains("data_collection"))
      t.collection = region_from_json(r["data_collection"], t.collection);
    if (r.contains("reachability"))
      t.reachability = region_from_json(r["reachability"], t.reachability);
    if (r.contains("task_area"))
      t.task_area = region_from_json(r["task_area"], t.task_area);
  }
  if (j.contains("capture"))
    t.capture = capture_config_from_json(j["capture"], t.capture);
  if (j.contains("view"))
    t.view = view_filter_from_json(j["view"], t.view);
  if (j.contains("selection"))
    t.selection = selection_config_from_json(j["selection"], t.selection);
  return t;
}

/// Scene generator for a task, optionally pinned to one obstacle layout.
inline SceneSpec with_layout(SceneSpec s, std::optional<std::uint64_t> layout_seed) {
  if (layout_seed)
    s.layout_seed = layout_seed;
  return s;
}

// ---- rollout collection ---------------------------------------------------

inline constexpr std::uint64_t kCollectStream = 0xc011ec7;
inline constexpr std::uint64_t kEvalStream = 0xe7a1;

struct CollectOptions {
  int max_attempts = 100000;
  /// Obstacle layouts cycled over attempts; empty keeps the spec's own.
  std::vector<std::uint64_t> layout_seeds;
};

inline SceneSpec layout_for(const SceneSpec &s, const std::vector<std::uint64_t> &layouts, std::size_t i) {
  return layouts.empty() ? s : with_layout(s, layouts[i % layouts.size()]);
}

/// Generates a scene per attempt, draws a candidate pose from the
/// data-collection region and keeps it when the oracle accepts. Each success
/// is captured (frames stitched into the scene frame) and stored as one entry.
inline RawDataset collect_rollouts(const TaskSetup &task, int n_success, std::uint64_t seed,
                                   const CollectOptions &opts = {}) {
  if (n_success < 1)
    fail(ErrorCategory::InvalidConfig, "n_success must be at least 1");
  task.oracle.validate();
  RawDataset ds;
  ds.seed = seed;
  ds.config = {{"task", task_to_json(task)}, {"n_success", n_success}, {"max_attempts", opts.max_attempts}};
  if (!opts.layout_seeds.empty())
    ds.config["layout_seeds"] = opts.layout_seeds;
  Rng rng = make_rng(derive_seed(seed, kCollectStream, 0));
  const StitchedCloud none;
  for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
    ds.attempts = attempt + 1;
    const Scene scene = generate_scene(layout_for(task.scene, opts.layout_seeds, static_cast<std::size_t>(attempt)),
                                       derive_seed(seed, kCollectStream, static_cast<std::uint64_t>(attempt) + 1));
    const Pose p = sample_pose(task.collection, scene, none, task.view, rng);
    if (!oracle_success(scene, p, task.oracle))
      continue;
    RawEntry e;
    e.scene_id = static_cast<int>(ds.entries.size());
    e.stitched = capture_scene(scene, task.capture, task.view.intr, task.view.mount, derive_seed(scene.seed, 0xca7));
    e.label_pose = p;
    ds.entries.push_back(std::move(e));
    ds.scenes.push_back(scene);
    if (static_cast<int>(ds.entries.size()) == n_success)
      return ds;
  }
  fail(ErrorCategory::BudgetExhausted, "collected " + std::to_string(ds.entries.size()) + " of " +
                                           std::to_string(n_success) + " rollouts in " +
                                           std::to_string(opts.max_attempts) + " attempts");
}

/// First n entries of a raw dataset (a smaller collection with the same seed).
inline RawDataset raw_prefix(const RawDataset &ds, std::size_t n) {
  RawDataset out = ds;
  n = std::min(n, ds.entries.size());
  out.entries.resize(n);
  out.scenes.resize(n);
  out.config["n_success"] = n;
  return out;
}

inline AugmentConfig augment_config_for(const TaskSetup &task, AugmentConfig base = {}) {
  base.region = task.task_area;
  base.intr = task.view.intr;
  base.mount = task.view.mount;
  base.footprint_radius = task.view.footprint_radius;
  base.min_visible_points = task.view.min_visible_points;
  return base;
}

inline TrainDataset build_training_set(const RawDataset &raw, const AugmentConfig &cfg, std::uint64_t seed) {
  if (raw.entries.empty())
    fail(ErrorCategory::EmptyDataset, "raw dataset has no entries");
  TrainDataset out;
  out.seed = seed;
  out.config = {{"augment", augment_config_to_json(cfg)}, {"raw_seed", raw.seed}};
  for (std::size_t i = 0; i < raw.entries.size(); ++i) {
    auto samples = augment_entry(raw.entries[i], raw.scenes[i], cfg,
                                 derive_seed(seed, 0xa06, static_cast<std::uint64_t>(raw.entries[i].scene_id)));
    for (auto &s : samples)
      out.samples.push_back(std::move(s));
  }
  return out;
}

// ---- evaluation -----------------------------------------------------------

enum class Condition { Reachability, Oracle, N2M };

inline std::string condition_name(Condition c) {
  switch (c) {
  case Condition::Reachability: return "reachability";
  case Condition::Oracle: return "oracle";
  case Condition::N2M: return "n2m";
  }
  return "unknown";
}

inline Condition condition_from_name(const std::string &s) {
  if (s == "reachability")
    return Condition::Reachability;
  if (s == "oracle")
    return Condition::Oracle;
  if (s == "n2m")
    return Condition::N2M;
  fail(ErrorCategory::UsageError, "unknown condition '" + s + "'");
}

struct WilsonInterval {
  double lo = 0.0;
  double hi = 0.0;
};

inline WilsonInterval wilson_interval(int successes, int trials, double z = 1.959964) {
  if (trials <= 0)
    return {0.0, 1.0};
  const double n = trials, p = successes / n, z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct TrialRecord {
  int index = 0;
  std::uint64_t scene_seed = 0;
  bool success = false;
  int region_rejections = 0;
  int selection_rejections = 0;
  std::optional<Pose> nav_end;
  std::optional<Pose> pose;
  std::string error; // category name when the trial ended in an error
};

struct ExperimentReport {
  std::string task;
  Condition condition = Condition::Reachability;
  std::uint64_t seed = 0;
  std::vector<TrialRecord> trials;
  int successes = 0;
  double success_rate = 0.0;
  WilsonInterval interval;
  double wall_clock_seconds = 0.0;

  void finalize() {
    successes = 0;
    for (const auto &t : trials)
      successes += t.success ? 1 : 0;
    const int n = static_cast<int>(trials.size());
    success_rate = n > 0 ? static_cast<double>(successes) / n : 0.0;
    interval = wilson_interval(successes, n);
  }
};

inline json trial_to_json(const TrialRecord &t) {
  json j = {{"trial", t.index},
            {"scene_seed", t.scene_seed},
            {"success", t.success},
            {"region_rejections", t.region_rejections},
            {"selection_rejections", t.selection_rejections}};
  if (t.nav_end)
    j["nav_end_pose"] = pose_to_json(*t.nav_end);
  if (t.pose)
    j["pose"] = pose_to_json(*t.pose);
  if (!t.error.empty())
    j["error"] = t.error;
  return j;
}

/// Wall-clock is left out unless asked for, so reports of equal runs compare byte-equal.
inline json report_to_json(const ExperimentReport &r, bool with_timing = false) {
  json trials = json::array();
  for (const auto &t : r.trials)
    trials.push_back(trial_to_json(t));
  json j = {{"task", r.task},
            {"condition", condition_name(r.condition)},
            {"oracle", "synthetic geometric stand-in for a manipulation policy"},
            {"seed", r.seed},
            {"n_trials", r.trials.size()},
            {"successes", r.successes},
            {"success_rate", r.success_rate},
            {"wilson95", {r.interval.lo, r.interval.hi}},
            {"trials", trials}};
  if (with_timing)
    j["wall_clock_seconds"] = r.wall_clock_seconds;
  return j;
}

struct EvalOptions {
  /// Obstacle layouts cycled over trials; empty keeps the spec's own.
  std::vector<std::uint64_t> layout_seeds;
  /// Optional per-trial trace sink (n2m condition).
  std::function<void(const json &)> on_trace;
};

inline std::uint64_t eval_scene_seed(std::uint64_t seed, int trial) {
  return derive_seed(seed, kEvalStream, static_cast<std::uint64_t>(trial));
}

/// One trial per freshly generated scene, judged by the oracle. Selection
/// exhaustion in the n2m condition counts as a failed trial.
inline ExperimentReport run_condition(const TaskSetup &task, Condition condition, int n_trials, std::uint64_t seed,
                                      const ModelParams *model = nullptr, const EvalOptions &opts = {}) {
  if (n_trials < 1)
    fail(ErrorCategory::InvalidConfig, "n_trials must be at least 1");
  if (condition == Condition::N2M && !model)
    fail(ErrorCategory::InvalidConfig, "the n2m condition needs a model");
  if (condition == Condition::N2M && model->config.pose_dim != task.pose_dim())
    fail(ErrorCategory::DimensionMismatch, "model pose dimension does not match the task");
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.task = task.name;
  rep.condition = condition;
  rep.seed = seed;
  TransitionConfig tcfg{task.view.intr, task.view.mount, task.selection};
  tcfg.selection.footprint_radius = task.view.footprint_radius;

  for (int t = 0; t < n_trials; ++t) {
    TrialRecord rec;
    rec.index = t;
    rec.scene_seed = eval_scene_seed(seed, t);
    const Scene scene =
        generate_scene(layout_for(task.scene, opts.layout_seeds, static_cast<std::size_t>(t)), rec.scene_seed);
    Rng rng = make_rng(derive_seed(rec.scene_seed, 0x7e1a1));
    switch (condition) {
    case Condition::Reachability: {
      const Pose p = sample_pose(task.reachability, scene, StitchedCloud{}, task.view, rng, &rec.region_rejections);
      rec.pose = p;
      rec.success = oracle_success(scene, p, task.oracle);
      break;
    }
    case Condition::Oracle: {
      const auto &refs = task.scene.reference_poses;
      rec.pose = refs[static_cast<std::size_t>(t) % refs.size()];
      rec.success = oracle_success(scene, *rec.pose, task.oracle);
      break;
    }
    case Condition::N2M: {
      const StitchedCloud world = surface_sample(scene, task.view.density, scene.seed);
      const Pose nav = sample_pose(task.task_area, scene, world, task.view, rng, &rec.region_rejections);
      rec.nav_end = nav;
      try {
        const TransitionOutcome o = run_transition(scene, world, *model, nav, tcfg, derive_seed(rec.scene_seed, 0x72a));
        rec.pose = o.world_pose;
        rec.selection_rejections = o.draws - 1;
        rec.success = oracle_success(scene, o.world_pose, task.oracle);
        if (opts.on_trace) {
          json tr = transition_trace(o);
          tr["trial"] = t;
          tr["success"] = rec.success;
          opts.on_trace(tr);
        }
      } catch (const Error &e) {
        if (e.category() != ErrorCategory::SelectionExhausted)
          throw;
        rec.selection_rejections = tcfg.selection.max_tries;
        rec.error = category_name(e.category());
      }
      break;
    }
    }
    rep.trials.push_back(std::move(rec));
  }
  rep.finalize();
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---- suite ----------------------------------------------------------------

struct SuiteConfig {
  TaskSetup task = standard_task();
  std::uint64_t seed = 0;
  std::vector<int> rollout_counts{5, 10, 20, 50};
  int trials = 300;
  std::vector<Condition> conditions{Condition::Reachability, Condition::Oracle, Condition::N2M};
  /// Layouts used for collection and seen-scene evaluation, and held-out
  /// layouts for unseen-scene evaluation (empty skips that split).
  std::vector<std::uint64_t> seen_layouts{101, 102, 103};
  std::vector<std::uint64_t> unseen_layouts{201, 202, 203};
  int max_collect_attempts = 100000;
  AugmentConfig augment;
  ModelConfig model;
  TrainConfig train;
  LossConfig loss;
};

inline json suite_config_to_json(const SuiteConfig &c) {
  json conds = json::array();
  for (auto k : c.conditions)
    conds.push_back(condition_name(k));
  return {{"task", task_to_json(c.task)},
          {"seed", c.seed},
          {"rollout_counts", c.rollout_counts},
          {"trials", c.trials},
          {"conditions", conds},
          {"seen_layouts", c.seen_layouts},
          {"unseen_layouts", c.unseen_layouts},
          {"max_collect_attempts", c.max_collect_attempts},
          {"augment", augment_config_to_json(c.augment)},
          {"model", model_config_to_json(c.model)},
          {"train", train_config_to_json(c.train)},
          {"loss", loss_config_to_json(c.loss)}};
}

inline SuiteConfig suite_config_from_json(const json &j) {
  SuiteConfig c;
  if (j.contains("task"))
    c.task = j["task"].is_string() ? task_preset(j["task"].get<std::string>()) : task_from_json(j["task"]);
  c.seed = j.value("seed", c.seed);
  if (j.contains("rollout_counts"))
    c.rollout_counts = j["rollout_counts"].get<std::vector<int>>();
  c.trials = j.value("trials", c.trials);
  if (j.contains("conditions")) {
    c.conditions.clear();
    for (const auto &s : j["conditions"])
      c.conditions.push_back(condition_from_name(s.get<std::string>()));
  }
  if (j.contains("seen_layouts"))
    c.seen_layouts = j["seen_layouts"].get<std::vector<std::uint64_t>>();
  if (j.contains("unseen_layouts"))
    c.unseen_layouts = j["unseen_layouts"].get<std::vector<std::uint64_t>>();
  c.max_collect_attempts = j.value("max_collect_attempts", c.max_collect_attempts);
  c.augment = augment_config_for(c.task, j.contains("augment") ? augment_config_from_json(j["augment"]) : AugmentConfig{});
  c.model = j.contains("model") ? model_config_from_json(j["model"]) : c.model;
  c.model.pose_dim = c.task.pose_dim();
  c.model.n_points = c.augment.n_points;
  c.train = j.contains("train") ? train_config_from_json(j["train"]) : c.train;
  c.loss = j.contains("loss") ? loss_config_from_json(j["loss"]) : c.loss;
  if (c.rollout_counts.empty() || *std::min_element(c.rollout_counts.begin(), c.rollout_counts.end()) < 1)
    fail(ErrorCategory::InvalidConfig, "rollout_counts must be positive");
  if (c.trials < 1)
    fail(ErrorCategory::InvalidConfig, "trials must be at least 1");
  return c;
}

struct SuiteCell {
  std::string name; // e.g. "n2m/rollouts=10/seen"
  int rollouts = 0; // 0 for baselines
  std::string split;
  ExperimentReport report;
};

struct SuiteReport {
  std::vector<SuiteCell> cells;
  std::string summary;
};

inline std::string summary_table(const std::vector<SuiteCell> &cells) {
  std::string out = "cell                                  trials  success  rate    wilson95\n";
  char line[160];
  for (const auto &c : cells) {
    std::snprintf(line, sizeof line, "%-36s  %6zu  %7d  %.4f  [%.4f, %.4f]\n", c.name.c_str(),
                  c.report.trials.size(), c.report.successes, c.report.success_rate, c.report.interval.lo,
                  c.report.interval.hi);
    out += line;
  }
  out += "(success judged by a synthetic geometric oracle)\n";
  return out;
}

/// Training and evaluation grid. One collection of max(rollout_counts)
/// successes is made on the seen layouts; each rollout count trains on a
/// prefix of it. Evaluation scenes use a seed stream disjoint from the
/// collection scenes (checked).
inline SuiteReport run_suite(const SuiteConfig &cfg,
                             const std::function<void(const std::string &)> &progress = {}) {
  auto note = [&](const std::string &s) {
    if (progress)
      progress(s);
  };
  for (auto u : cfg.unseen_layouts)
    if (std::find(cfg.seen_layouts.begin(), cfg.seen_layouts.end(), u) != cfg.seen_layouts.end())
      fail(ErrorCategory::InvalidConfig, "unseen layout " + std::to_string(u) + " is also a seen layout");

  const int n_max = *std::max_element(cfg.rollout_counts.begin(), cfg.rollout_counts.end());
  const std::uint64_t collect_seed = derive_seed(cfg.seed, 0xc0);
  const std::uint64_t eval_seed_seen = derive_seed(cfg.seed, 0xe5);
  const std::uint64_t eval_seed_unseen = derive_seed(cfg.seed, 0xe6);

  SuiteReport out;
  std::vector<std::pair<std::string, std::vector<std::uint64_t>>> splits{{"seen", cfg.seen_layouts}};
  if (!cfg.unseen_layouts.empty())
    splits.emplace_back("unseen", cfg.unseen_layouts);
  auto split_seed = [&](const std::string &split) { return split == "seen" ? eval_seed_seen : eval_seed_unseen; };

  for (auto cond : cfg.conditions) {
    if (cond == Condition::N2M)
      continue;
    for (const auto &[split, layouts] : splits) {
      note("baseline " + condition_name(cond) + " " + split);
      SuiteCell cell{condition_name(cond) + "/" + split, 0, split, {}};
      cell.report = run_condition(cfg.task, cond, cfg.trials, split_seed(split), nullptr, {layouts, {}});
      out.cells.push_back(std::move(cell));
    }
  }

  if (std::find(cfg.conditions.begin(), cfg.conditions.end(), Condition::N2M) != cfg.conditions.end()) {
    note("collect " + std::to_string(n_max) + " rollouts");
    CollectOptions copts;
    copts.max_attempts = cfg.max_collect_attempts;
    copts.layout_seeds = cfg.seen_layouts;
    const RawDataset raw = collect_rollouts(cfg.task, n_max, collect_seed, copts);
    std::set<std::uint64_t> train_seeds;
    for (const auto &s : raw.scenes)
      train_seeds.insert(s.seed);
    for (const auto &[split, layouts] : splits)
      for (int t = 0; t < cfg.trials; ++t)
        if (train_seeds.count(eval_scene_seed(split_seed(split), t)))
          fail(ErrorCategory::InvalidConfig, "evaluation scene seed collides with a training scene seed");

    const TrainDataset full = build_training_set(raw, cfg.augment, derive_seed(cfg.seed, 0xa0));
    std::vector<int> counts = cfg.rollout_counts;
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    for (int n : counts) {
      std::vector<TrainSample> subset;
      for (const auto &s : full.samples)
        if (s.source_scene_id < n)
          subset.push_back(s);
      note("train on " + std::to_string(n) + " rollouts (" + std::to_string(subset.size()) + " samples)");
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, 0x7a, static_cast<std::uint64_t>(n));
      const TrainResult tr = train(subset, cfg.model, tc, cfg.loss);
      for (const auto &[split, layouts] : splits) {
        note("eval n2m rollouts=" + std::to_string(n) + " " + split);
        SuiteCell cell{"n2m/rollouts=" + std::to_string(n) + "/" + split, n, split, {}};
        cell.report = run_condition(cfg.task, Condition::N2M, cfg.trials, split_seed(split), &tr.model, {layouts, {}});
        out.cells.push_back(std::move(cell));
      }
    }
  }
  out.summary = summary_table(out.cells);
  return out;
}

inline std::string cell_file_name(const std::string &cell) {
  std::string s = cell;
  for (char &c : s)
    if (c == '/' || c == '=')
      c = '_';
  return s + ".json";
}

/// Reports (byte-stable) and wall-clock timings (not) go to separate files.
inline void write_suite(const std::filesystem::path &dir, const SuiteConfig &cfg, const SuiteReport &rep) {
  json index = json::array();
  json timing = json::object();
  for (const auto &c : rep.cells) {
    const std::string file = cell_file_name(c.name);
    write_json_file(dir / "reports" / file, report_to_json(c.report));
    index.push_back({{"cell", c.name},
                     {"rollouts", c.rollouts},
                     {"split", c.split},
                     {"condition", condition_name(c.report.condition)},
                     {"success_rate", c.report.success_rate},
                     {"wilson95", {c.report.interval.lo, c.report.interval.hi}},
                     {"file", "reports/" + file}});
    timing[c.name] = c.report.wall_clock_seconds;
  }
  write_json_file(dir / "suite.json", {{"config", suite_config_to_json(cfg)}, {"seed", cfg.seed}, {"cells", index}});
  write_text_file(dir / "summary.txt", rep.summary);
  write_json_file(dir / "timing.json", timing);
}

} // namespace n2m

#endif // N2M_HARNESS_HPP_
