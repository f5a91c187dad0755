#ifndef N2M_RENDER_HPP_
#define N2M_RENDER_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "n2m/geometry.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"
#include "n2m/scene.hpp"

namespace n2m {

constexpr double kDefaultSurfaceDensity = 400.0;
constexpr double kDefaultVoxelSize = 0.02;
inline const Eigen::Vector3d kFloorColor{0.62, 0.6, 0.55};

/// Point cloud expressed in the scene frame, de-duplicated at voxel_size.
struct StitchedCloud {
  PointCloud cloud;
  double voxel_size = kDefaultVoxelSize;
};

namespace detail {

// Samples round-stochastically density*area points on a planar patch spanned
// by corner + s*edge_a + t*edge_b, s,t in [0,1].
inline void sample_patch(PointCloud &out, Rng &rng, double density, const Eigen::Vector3d &corner,
                         const Eigen::Vector3d &edge_a, const Eigen::Vector3d &edge_b, const Eigen::Vector3d &color,
                         int label) {
  const double area = edge_a.cross(edge_b).norm();
  const double expected = density * area;
  std::size_t n = static_cast<std::size_t>(std::floor(expected));
  if (uniform(rng, 0.0, 1.0) < expected - std::floor(expected))
    ++n;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = uniform(rng, 0.0, 1.0), t = uniform(rng, 0.0, 1.0);
    out.push_back(corner + s * edge_a + t * edge_b, color, label);
  }
}

inline void sample_box(PointCloud &out, Rng &rng, double density, const Box &b) {
  const Eigen::Matrix2d r = Transform2D{b.yaw, {}}.rotation_matrix();
  const Eigen::Vector3d ax(r(0, 0), r(1, 0), 0.0), ay(r(0, 1), r(1, 1), 0.0), az(0.0, 0.0, 1.0);
  const Eigen::Vector3d ex = ax * b.extents.x(), ey = ay * b.extents.y(), ez = az * b.extents.z();
  const Eigen::Vector3d lo = b.center - 0.5 * (ex + ey + ez);
  sample_patch(out, rng, density, lo, ex, ey, b.color, b.segment_label);    // bottom
  sample_patch(out, rng, density, lo + ez, ex, ey, b.color, b.segment_label); // top
  sample_patch(out, rng, density, lo, ex, ez, b.color, b.segment_label);
  sample_patch(out, rng, density, lo + ey, ex, ez, b.color, b.segment_label);
  sample_patch(out, rng, density, lo, ey, ez, b.color, b.segment_label);
  sample_patch(out, rng, density, lo + ex, ey, ez, b.color, b.segment_label);
}

} // namespace detail

/// Dense surface samples of every box face (expected density*area points per
/// face, jittered uniformly) plus the floor outside box footprints.
inline StitchedCloud surface_sample(const Scene &scene, double density, std::uint64_t seed) {
  if (!(density > 0.0))
    fail(ErrorCategory::InvalidConfig, "surface density must be positive");
  Rng rng = make_rng(derive_seed(seed, 0x5afe));
  StitchedCloud out;
  PointCloud &pc = out.cloud;

  const auto &b = scene.bounds;
  PointCloud floor;
  detail::sample_patch(floor, rng, density, {b.xmin, b.ymin, 0.0}, {b.xmax - b.xmin, 0.0, 0.0},
                       {0.0, b.ymax - b.ymin, 0.0}, kFloorColor, kFloorLabel);
  auto on_floor_under = [&](const Box &box, const Eigen::Vector3d &p) {
    return box.z_min() <= 1e-9 && box.footprint_distance({p.x(), p.y()}) == 0.0;
  };
  for (std::size_t i = 0; i < floor.size(); ++i) {
    const auto &p = floor.positions[i];
    bool hidden = on_floor_under(scene.target, p);
    for (const auto &o : scene.obstacles)
      hidden = hidden || on_floor_under(o, p);
    if (!hidden)
      pc.push_back(p, floor.colors[i], floor.labels[i]);
  }
  for (const auto &o : scene.obstacles)
    detail::sample_box(pc, rng, density, o);
  detail::sample_box(pc, rng, density, scene.target);
  return out;
}

/// Surface samples of a single box, used by tests and tooling.
inline PointCloud surface_sample_box(const Box &box, double density, std::uint64_t seed) {
  if (!(density > 0.0))
    fail(ErrorCategory::InvalidConfig, "surface density must be positive");
  Rng rng = make_rng(derive_seed(seed, 0x5afe));
  PointCloud pc;
  detail::sample_box(pc, rng, density, box);
  return pc;
}

/// Pose of the camera's projection center in the world, plus the world->camera map.
struct CameraView {
  Transform2D world_to_body;
  CameraMount mount;

  Eigen::Vector3d world_to_camera(const Eigen::Vector3d &p_world) const {
    return mount.body_to_camera(world_to_body.apply(p_world));
  }
};

inline CameraView camera_view(const Pose &robot, const CameraMount &mount) {
  return {invert(Transform2D::from_pose(robot)), mount};
}

/// One-pixel point splats with a z-buffer. Source points are in the world
/// (scene) frame; survivors are returned in the robot body frame in
/// row-major pixel order. At most one point survives per pixel; ties keep the
/// earlier source point.
inline PointCloud render(const PointCloud &source_world, const Pose &robot, const CameraIntrinsics &intr,
                         const CameraMount &mount) {
  const CameraView view = camera_view(robot, mount);
  const Eigen::Matrix3d rot = mount.body_to_camera_rotation();
  const Eigen::Matrix2d w2b = view.world_to_body.rotation_matrix();
  const Eigen::Vector2d w2b_t = view.world_to_body.translation;

  const std::size_t npix = static_cast<std::size_t>(intr.width) * static_cast<std::size_t>(intr.height);
  std::vector<double> zbuf(npix, std::numeric_limits<double>::infinity());
  std::vector<std::int64_t> owner(npix, -1);
  std::vector<Eigen::Vector3d> body(source_world.size());

  for (std::size_t i = 0; i < source_world.size(); ++i) {
    const Eigen::Vector3d &pw = source_world.positions[i];
    const Eigen::Vector2d xy = w2b * Eigen::Vector2d(pw.x(), pw.y()) + w2b_t;
    const Eigen::Vector3d pb(xy.x(), xy.y(), pw.z());
    const Eigen::Vector3d pc = rot * (pb - mount.offset);
    const double z = pc.z();
    if (!(z > intr.depth_min) || z > intr.depth_max)
      continue;
    const double u = intr.fx * pc.x() / z + intr.cx;
    const double v = intr.fy * pc.y() / z + intr.cy;
    if (!(u >= 0.0 && v >= 0.0 && u < intr.width && v < intr.height))
      continue;
    const std::size_t pix = static_cast<std::size_t>(v) * static_cast<std::size_t>(intr.width) + static_cast<std::size_t>(u);
    if (z < zbuf[pix]) {
      zbuf[pix] = z;
      owner[pix] = static_cast<std::int64_t>(i);
      body[i] = pb;
    }
  }

  PointCloud out;
  for (std::size_t pix = 0; pix < npix; ++pix) {
    if (owner[pix] < 0)
      continue;
    const auto i = static_cast<std::size_t>(owner[pix]);
    out.push_back(body[i], source_world.colors[i], source_world.labels[i]);
  }
  return out;
}

inline PointCloud render(const StitchedCloud &source, const Pose &robot, const CameraIntrinsics &intr,
                         const CameraMount &mount) {
  return render(source.cloud, robot, intr, mount);
}

/// Renders a scene directly by surface-sampling it at `density` with the
/// scene's own seed.
inline PointCloud render(const Scene &scene, const Pose &robot, const CameraIntrinsics &intr, const CameraMount &mount,
                         double density = kDefaultSurfaceDensity) {
  return render(surface_sample(scene, density, scene.seed), robot, intr, mount);
}

/// Maps a body-frame cloud rendered at `robot` back into the world frame.
inline PointCloud body_to_world(const PointCloud &body_cloud, const Pose &robot) {
  return transformed(body_cloud, Transform2D::from_pose(robot));
}

} // namespace n2m

#endif // N2M_RENDER_HPP_
