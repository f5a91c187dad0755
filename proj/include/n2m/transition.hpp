#ifndef N2M_TRANSITION_HPP_
#define N2M_TRANSITION_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "n2m/capture.hpp"
#include "n2m/dataset.hpp"
#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/gmm.hpp"
#include "n2m/json_io.hpp"
#include "n2m/model.hpp"
#include "n2m/render.hpp"
#include "n2m/scene.hpp"

namespace n2m {

/// Single forward pass; depends on nothing but its arguments.
template <PointEncoder E> GmmParams predict(const MixtureDensityNet<E> &params, const PointCloud &observation) {
  return predict_gmm(params, observation);
}

enum class SelectionMode { Sample, MaxWeightMean };

struct SelectionConfig {
  int max_tries = 100;
  double footprint_radius = kDefaultFootprintRadius;
  /// MaxWeightMean proposes the heaviest component's mean first and falls
  /// back to sampling if it collides.
  SelectionMode mode = SelectionMode::Sample;

  void validate() const {
    if (max_tries < 1)
      fail(ErrorCategory::InvalidConfig, "max_tries must be at least 1");
    if (!(footprint_radius > 0.0))
      fail(ErrorCategory::InvalidConfig, "footprint_radius must be positive");
  }
};

inline json selection_config_to_json(const SelectionConfig &c) {
  return {{"max_tries", c.max_tries},
          {"footprint_radius", c.footprint_radius},
          {"mode", c.mode == SelectionMode::Sample ? "sample" : "max-weight-mean"}};
}

inline SelectionConfig selection_config_from_json(const json &j, SelectionConfig c = {}) {
  c.max_tries = j.value("max_tries", c.max_tries);
  c.footprint_radius = j.value("footprint_radius", c.footprint_radius);
  if (j.contains("mode")) {
    const auto m = j["mode"].get<std::string>();
    if (m == "sample")
      c.mode = SelectionMode::Sample;
    else if (m == "max-weight-mean")
      c.mode = SelectionMode::MaxWeightMean;
    else
      fail(ErrorCategory::InvalidConfig, "unknown selection mode '" + m + "'");
  }
  c.validate();
  return c;
}

/// Returns true when the pose is in collision.
using CollisionPredicate = std::function<bool(const Pose &)>;

struct Selection {
  Pose pose;
  int draws = 0; // candidates tested, including the accepted one
};

inline Selection select_pose_traced(const GmmParams &gmm, const CollisionPredicate &collision,
                                    const SelectionConfig &cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = make_rng(derive_seed(seed, 0x5e1));
  for (int draw = 0; draw < cfg.max_tries; ++draw) {
    const Pose p = (draw == 0 && cfg.mode == SelectionMode::MaxWeightMean) ? gmm_max_weight_mean(gmm)
                                                                            : gmm_sample(gmm, rng);
    if (!collision(p))
      return {p, draw + 1};
  }
  fail(ErrorCategory::SelectionExhausted,
       "no collision-free pose after " + std::to_string(cfg.max_tries) + " draws");
}

inline Pose select_pose(const GmmParams &gmm, const CollisionPredicate &collision, const SelectionConfig &cfg,
                        std::uint64_t seed) {
  return select_pose_traced(gmm, collision, cfg, seed).pose;
}

// ---- differential-drive plan ----------------------------------------------

enum class SegmentKind { Rotate, Drive, Height };

struct Segment {
  SegmentKind kind;
  double value; // radians, meters, or meters of torso travel

  bool operator==(const Segment &) const = default;
};

inline std::string segment_kind_name(SegmentKind k) {
  switch (k) {
  case SegmentKind::Rotate: return "rotate";
  case SegmentKind::Drive: return "drive";
  case SegmentKind::Height: return "height";
  }
  return "unknown";
}

struct TransitionPlan {
  std::vector<Pose> waypoints; // start pose, then the pose after each segment
  std::vector<Segment> segments;
};

inline constexpr double kZeroSegment = 1e-12;

/// Applies one segment to a pose. A height segment on a pose without a
/// height starts from zero.
inline Pose apply_segment(const Pose &p, const Segment &s) {
  Pose out = p;
  switch (s.kind) {
  case SegmentKind::Rotate: out.theta = canonical_angle(p.theta + s.value); break;
  case SegmentKind::Drive:
    out.x += s.value * std::cos(p.theta);
    out.y += s.value * std::sin(p.theta);
    break;
  case SegmentKind::Height: out.h = p.h.value_or(0.0) + s.value; break;
  }
  return out;
}

inline Pose execute_segments(Pose p, const std::vector<Segment> &segments) {
  for (const auto &s : segments)
    p = apply_segment(p, s);
  return p;
}

/// Rotate toward the goal position, drive straight, rotate to the goal
/// heading, then adjust height. Collision-unaware.
inline TransitionPlan plan_transition(const Pose &from, const Pose &to) {
  TransitionPlan plan;
  const double dx = to.x - from.x, dy = to.y - from.y;
  const double dist = std::hypot(dx, dy);
  auto push = [&](SegmentKind k, double v) {
    if (std::abs(v) > kZeroSegment)
      plan.segments.push_back({k, v});
  };
  if (dist > kZeroSegment) {
    const double bearing = std::atan2(dy, dx);
    push(SegmentKind::Rotate, canonical_angle(bearing - from.theta));
    push(SegmentKind::Drive, dist);
    push(SegmentKind::Rotate, canonical_angle(to.theta - bearing));
  } else {
    push(SegmentKind::Rotate, canonical_angle(to.theta - from.theta));
  }
  if (to.h)
    push(SegmentKind::Height, *to.h - from.h.value_or(0.0));

  plan.waypoints.push_back(from);
  for (const auto &s : plan.segments)
    plan.waypoints.push_back(apply_segment(plan.waypoints.back(), s));
  // Pin the end exactly to the goal (folding differs from it only by rounding).
  Pose last = to;
  if (!to.h && from.h)
    last.h = from.h;
  plan.waypoints.back() = last;
  return plan;
}

inline json plan_to_json(const TransitionPlan &p) {
  json segs = json::array();
  for (const auto &s : p.segments)
    segs.push_back({{"kind", segment_kind_name(s.kind)}, {"value", s.value}});
  json wps = json::array();
  for (const auto &w : p.waypoints)
    wps.push_back(pose_to_json(w));
  return {{"segments", segs}, {"waypoints", wps}};
}

// ---- deployed step --------------------------------------------------------

struct TransitionConfig {
  CameraIntrinsics intr;
  CameraMount mount;
  SelectionConfig selection;
};

struct TransitionOutcome {
  Pose nav_end;
  PointCloud observation; // body frame, model-sized
  GmmParams gmm;          // ego frame
  Pose ego_pose;
  Pose world_pose;
  int draws = 0;
  TransitionPlan plan;
};

inline json transition_trace(const TransitionOutcome &o) {
  return {{"nav_end_pose", pose_to_json(o.nav_end)},
          {"gmm", gmm_to_json(o.gmm)},
          {"accepted_ego_pose", pose_to_json(o.ego_pose)},
          {"accepted_world_pose", pose_to_json(o.world_pose)},
          {"rejections", o.draws - 1},
          {"plan", plan_to_json(o.plan)}};
}

/// Observe from nav_end (render of `world`, resampled to the model size),
/// predict, select a collision-free pose in the ego frame, express it in the
/// world frame and plan the base motion.
template <PointEncoder E>
TransitionOutcome run_transition(const Scene &scene, const StitchedCloud &world, const MixtureDensityNet<E> &model,
                                 const Pose &nav_end, const TransitionConfig &cfg, std::uint64_t seed) {
  TransitionOutcome out;
  out.nav_end = nav_end;
  const PointCloud rendered = render(world, nav_end, cfg.intr, cfg.mount);
  if (rendered.empty())
    fail(ErrorCategory::EmptyCloud, "nothing visible from the navigation end pose");
  out.observation = resample_to_n(rendered, model.config.n_points, derive_seed(seed, 0x0b5));
  out.gmm = predict(model, out.observation);
  const double r = cfg.selection.footprint_radius;
  const auto collision = [&](const Pose &ego) { return collides(scene, ego_to_world(ego, nav_end), r); };
  const Selection sel = select_pose_traced(out.gmm, collision, cfg.selection, derive_seed(seed, 0x5e1ec7));
  out.ego_pose = sel.pose;
  out.draws = sel.draws;
  out.world_pose = ego_to_world(sel.pose, nav_end);
  out.plan = plan_transition(nav_end, out.world_pose);
  return out;
}

} // namespace n2m

#endif // N2M_TRANSITION_HPP_
