#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "n2m/capture.hpp"
#include "n2m/harness.hpp"
#include "n2m/render.hpp"

using namespace n2m;

namespace {

using Key = std::tuple<long long, long long, long long>;

Key key_of(const Eigen::Vector3d &p) {
  return {std::llround(p.x() * 1e8), std::llround(p.y() * 1e8), std::llround(p.z() * 1e8)};
}

std::set<Key> key_set(const PointCloud &c) {
  std::set<Key> s;
  for (const auto &p : c.positions)
    s.insert(key_of(p));
  return s;
}

/// Reference z-buffer built from the public projection primitives.
std::map<std::size_t, double> oracle_depths(const PointCloud &world, const Pose &robot, const CameraIntrinsics &intr,
                                            const CameraMount &mount) {
  std::map<std::size_t, double> best;
  for (const auto &pw : world.positions) {
    const Pose e = world_to_ego(Pose(pw.x(), pw.y(), 0.0), robot);
    const Eigen::Vector3d pc = mount.body_to_camera({e.x, e.y, pw.z()});
    if (pc.z() <= intr.depth_min || pc.z() > intr.depth_max)
      continue;
    const PixelDepth pd = project(intr, pc);
    if (pd.u < 0 || pd.v < 0 || pd.u >= intr.width || pd.v >= intr.height)
      continue;
    const std::size_t pix = static_cast<std::size_t>(pd.v) * intr.width + static_cast<std::size_t>(pd.u);
    auto it = best.find(pix);
    if (it == best.end() || pd.depth < it->second)
      best[pix] = pd.depth;
  }
  return best;
}

Scene standard_scene(std::uint64_t seed) { return generate_scene(standard_task().scene, seed); }

} // namespace

TEST(Render, NearerPointOnSameRayWins) {
  CameraMount m;
  m.pitch = 0.0;
  PointCloud src;
  src.push_back(m.camera_to_body({0, 0, 2}), {0, 0, 1}, 3);
  src.push_back(m.camera_to_body({0, 0, 1}), {1, 0, 0}, 2);
  const PointCloud out = render(src, Pose(0, 0, 0), {}, m);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out.labels[0], 2);
  EXPECT_LT((out.positions[0] - m.camera_to_body({0, 0, 1})).norm(), 1e-12);
}

TEST(Render, OutputsProjectInsideImageAndRange) {
  const Scene s = standard_scene(1);
  const CameraIntrinsics intr;
  const CameraMount mount;
  const PointCloud out = render(s, Pose(0, 0, kPi / 2), intr, mount);
  ASSERT_FALSE(out.empty());
  for (const auto &p : out.positions) {
    const PixelDepth pd = project(intr, mount.body_to_camera(p));
    EXPECT_GE(pd.u, 0);
    EXPECT_LT(pd.u, intr.width);
    EXPECT_GE(pd.v, 0);
    EXPECT_LT(pd.v, intr.height);
    EXPECT_GT(pd.depth, intr.depth_min);
    EXPECT_LE(pd.depth, intr.depth_max);
  }
}

TEST(Render, AtMostOnePointPerPixel) {
  const Scene s = standard_scene(2);
  const CameraIntrinsics intr;
  const CameraMount mount;
  const PointCloud out = render(s, Pose(0.2, -0.4, 1.7), intr, mount);
  std::set<std::size_t> pixels;
  for (const auto &p : out.positions) {
    const PixelDepth pd = project(intr, mount.body_to_camera(p));
    EXPECT_TRUE(pixels.insert(static_cast<std::size_t>(pd.v) * intr.width + static_cast<std::size_t>(pd.u)).second);
  }
}

TEST(Render, MatchesReferenceZBuffer) {
  const Scene s = standard_scene(3);
  const CameraIntrinsics intr;
  const CameraMount mount;
  const StitchedCloud world = surface_sample(s, 400, 3);
  const Pose robot(-0.3, 0.1, 1.2);
  const PointCloud out = render(world, robot, intr, mount);
  const auto ref = oracle_depths(world.cloud, robot, intr, mount);
  EXPECT_NEAR(static_cast<double>(out.size()), static_cast<double>(ref.size()), 2.0);
  std::size_t matched = 0;
  for (const auto &p : out.positions) {
    const PixelDepth pd = project(intr, mount.body_to_camera(p));
    const auto it = ref.find(static_cast<std::size_t>(pd.v) * intr.width + static_cast<std::size_t>(pd.u));
    if (it != ref.end() && std::abs(it->second - pd.depth) < 1e-9)
      ++matched;
  }
  EXPECT_GE(matched + 2, out.size());
}

TEST(Render, SelfViewIsSubsetOfFrame) {
  const Scene s = standard_scene(4);
  CaptureConfig cfg;
  cfg.n_frames = 1;
  const auto frames = sample_scene_frames(s, cfg, {}, {}, 5);
  const StitchedCloud st = stitch(frames, cfg.voxel_size);
  const PointCloud again = render(st, frames[0].robot, {}, {});
  const auto frame_keys = key_set(frames[0].cloud);
  std::size_t inside = 0;
  for (const auto &p : again.positions)
    inside += frame_keys.count(key_of(p));
  EXPECT_EQ(inside, again.size());
}

TEST(Render, WorldPointsAgreeAcrossViewpoints) {
  const Scene s = standard_scene(5);
  const StitchedCloud world = surface_sample(s, 400, 5);
  const auto src = key_set(world.cloud);
  const Pose r1(0, 0.2, kPi / 2), r2(0.4, 0.0, 2.0);
  const PointCloud w1 = body_to_world(render(world, r1, {}, {}), r1);
  const PointCloud w2 = body_to_world(render(world, r2, {}, {}), r2);
  for (const PointCloud *w : {&w1, &w2})
    for (const auto &p : w->positions)
      EXPECT_TRUE(src.count(key_of(p)));
  const auto k2 = key_set(w2);
  std::size_t shared = 0;
  for (const auto &p : w1.positions)
    shared += k2.count(key_of(p));
  EXPECT_GT(shared, 0u);
}

TEST(Render, EnlargingImageNeverRemovesPoints) {
  const Scene s = standard_scene(6);
  const StitchedCloud world = surface_sample(s, 400, 6);
  CameraIntrinsics small, big;
  big.width = small.width + 40;
  big.height = small.height + 30;
  for (const Pose &r : {Pose(0, 0, kPi / 2), Pose(-1, -1, 0.7), Pose(1, 0, 2.5)}) {
    const auto kb = key_set(render(world, r, big, {}));
    for (const auto &p : render(world, r, small, {}).positions)
      EXPECT_TRUE(kb.count(key_of(p)));
  }
}

TEST(SurfaceSample, UnitCubeCountAndDensityScaling) {
  Box cube;
  cube.center = {0, 0, 0.5};
  cube.extents = {1, 1, 1};
  const auto n = surface_sample_box(cube, 100.0, 1).size();
  EXPECT_NEAR(static_cast<double>(n), 600.0, 60.0);
  EXPECT_THROW(surface_sample_box(cube, 0.0, 1), Error);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double a = static_cast<double>(surface_sample_box(cube, 200.0, seed).size());
    const double b = static_cast<double>(surface_sample_box(cube, 400.0, seed).size());
    EXPECT_NEAR(b / a, 2.0, 0.2);
  }
}

TEST(SurfaceSample, PointsLieOnSurfaces) {
  Box b;
  b.center = {0.3, -0.2, 0.4};
  b.extents = {0.5, 0.7, 0.8};
  b.yaw = 0.6;
  const PointCloud pc = surface_sample_box(b, 300, 2);
  const Transform2D to_box = invert(Transform2D{b.yaw, b.center_xy()});
  for (const auto &p : pc.positions) {
    const Eigen::Vector2d q = to_box.apply(Eigen::Vector2d(p.x(), p.y()));
    const Eigen::Vector3d l(q.x(), q.y(), p.z() - b.center.z());
    const Eigen::Vector3d slack = (0.5 * b.extents - l.cwiseAbs());
    EXPECT_GE(slack.minCoeff(), -1e-9);
    EXPECT_LE(slack.minCoeff(), 1e-9); // on at least one face
  }
}
