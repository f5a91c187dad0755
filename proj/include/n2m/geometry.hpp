#ifndef N2M_GEOMETRY_HPP_
#define N2M_GEOMETRY_HPP_

#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>

#include "n2m/error.hpp"

// Frame conventions used throughout:
//   body frame   x forward, y left, z up, angles counter-clockwise
//   camera frame z forward (optical axis), x right, y down
// Torso height is measured along gravity and is never re-expressed when the
// planar frame changes.
namespace n2m {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Maps any finite angle into (-pi, pi].
inline double canonical_angle(double a) {
  double r = std::remainder(a, kTwoPi);
  if (r <= -kPi)
    r += kTwoPi;
  return r;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  std::optional<double> h;

  Pose() = default;
  Pose(double x_, double y_, double theta_) : x(x_), y(y_), theta(canonical_angle(theta_)) {}
  Pose(double x_, double y_, double theta_, double h_)
      : x(x_), y(y_), theta(canonical_angle(theta_)), h(h_) {}

  int dim() const { return h ? 4 : 3; }

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd v(dim());
    v << x, y, theta;
    if (h)
      v[3] = *h;
    return v;
  }

  static Pose from_vector(const Eigen::VectorXd &v) {
    if (v.size() == 4)
      return Pose(v[0], v[1], v[2], v[3]);
    if (v.size() != 3)
      fail(ErrorCategory::DimensionMismatch, "pose vector must have 3 or 4 entries");
    return Pose(v[0], v[1], v[2]);
  }

  bool operator==(const Pose &) const = default;
};

struct Transform2D {
  double rotation = 0.0;
  Eigen::Vector2d translation = Eigen::Vector2d::Zero();

  static Transform2D identity() { return {}; }

  static Transform2D from_pose(const Pose &p) { return {p.theta, {p.x, p.y}}; }

  Eigen::Matrix2d rotation_matrix() const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    Eigen::Matrix2d r;
    r << c, -s, s, c;
    return r;
  }

  Eigen::Vector2d apply(const Eigen::Vector2d &p) const { return rotation_matrix() * p + translation; }

  Eigen::Vector3d apply(const Eigen::Vector3d &p) const {
    const Eigen::Vector2d xy = apply(Eigen::Vector2d(p.x(), p.y()));
    return {xy.x(), xy.y(), p.z()};
  }
};

/// Result applies b first, then a.
inline Transform2D compose(const Transform2D &a, const Transform2D &b) {
  return {canonical_angle(a.rotation + b.rotation), a.rotation_matrix() * b.translation + a.translation};
}

inline Transform2D invert(const Transform2D &t) {
  const double r = canonical_angle(-t.rotation);
  Transform2D inv{r, {}};
  inv.translation = -(inv.rotation_matrix() * t.translation);
  return inv;
}

/// Applies a planar rigid transform to a pose; h passes through.
inline Pose transform_pose(const Transform2D &t, const Pose &p) {
  const Transform2D r = compose(t, Transform2D::from_pose(p));
  Pose out(r.translation.x(), r.translation.y(), r.rotation);
  out.h = p.h;
  return out;
}

/// Expresses a world-frame pose in the body frame of `robot`.
inline Pose world_to_ego(const Pose &p_world, const Pose &robot) {
  return transform_pose(invert(Transform2D::from_pose(robot)), p_world);
}

inline Pose ego_to_world(const Pose &p_ego, const Pose &robot) {
  return transform_pose(Transform2D::from_pose(robot), p_ego);
}

struct CameraIntrinsics {
  double fx = 110.0;
  double fy = 110.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;
  double depth_min = 0.1;
  double depth_max = 10.0;

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0))
      fail(ErrorCategory::InvalidConfig, "focal lengths must be positive");
    if (!(depth_min > 0.0 && depth_min < depth_max))
      fail(ErrorCategory::InvalidConfig, "require 0 < depth_min < depth_max");
    if (width < 1 || height < 1)
      fail(ErrorCategory::InvalidConfig, "image must be at least 1x1");
  }
};

/// Rigid offset of the camera in the robot body frame. Pitch is positive when
/// the optical axis tilts toward the floor; at zero pitch the optical axis is
/// the body x axis.
struct CameraMount {
  Eigen::Vector3d offset{0.1, 0.0, 1.2};
  double pitch = deg_to_rad(20.0);

  /// Rows are the camera x (right), y (down), z (forward) axes in body coordinates.
  Eigen::Matrix3d body_to_camera_rotation() const {
    const double c = std::cos(pitch), s = std::sin(pitch);
    Eigen::Matrix3d r;
    r << 0.0, -1.0, 0.0, //
        -s, 0.0, -c,     //
        c, 0.0, -s;
    return r;
  }

  Eigen::Vector3d body_to_camera(const Eigen::Vector3d &p_body) const {
    return body_to_camera_rotation() * (p_body - offset);
  }

  Eigen::Vector3d camera_to_body(const Eigen::Vector3d &p_cam) const {
    return body_to_camera_rotation().transpose() * p_cam + offset;
  }
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

inline PixelDepth project(const CameraIntrinsics &intr, const Eigen::Vector3d &point_cam) {
  const double z = point_cam.z();
  if (!(z > intr.depth_min))
    fail(ErrorCategory::NonPositiveDepth, "point is not in front of the camera");
  return {intr.fx * point_cam.x() / z + intr.cx, intr.fy * point_cam.y() / z + intr.cy, z};
}

inline Eigen::Vector3d unproject(const CameraIntrinsics &intr, double u, double v, double depth) {
  if (!(depth >= intr.depth_min && depth <= intr.depth_max))
    fail(ErrorCategory::DepthOutOfRange, "depth outside the camera range");
  return {(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth};
}

} // namespace n2m

#endif // N2M_GEOMETRY_HPP_
