#ifndef N2M_POINT_CLOUD_HPP_
#define N2M_POINT_CLOUD_HPP_

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "n2m/error.hpp"
#include "n2m/geometry.hpp"

namespace n2m {

/// Segment labels shared by every scene.
constexpr int kFloorLabel = 0;
constexpr int kTargetLabel = 1;
constexpr int kFirstObstacleLabel = 2;

struct PointCloud {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Vector3d> colors; // RGB in [0, 1]
  std::vector<int> labels;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void reserve(std::size_t n) {
    positions.reserve(n);
    colors.reserve(n);
    labels.reserve(n);
  }

  void push_back(const Eigen::Vector3d &p, const Eigen::Vector3d &c, int label) {
    positions.push_back(p);
    colors.push_back(c);
    labels.push_back(label);
  }

  void append(const PointCloud &other) {
    positions.insert(positions.end(), other.positions.begin(), other.positions.end());
    colors.insert(colors.end(), other.colors.begin(), other.colors.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  }

  void validate() const {
    if (colors.size() != positions.size() || labels.size() != positions.size())
      fail(ErrorCategory::DimensionMismatch, "point cloud arrays differ in length");
  }

  std::size_t count_label(int label) const {
    std::size_t n = 0;
    for (int l : labels)
      n += (l == label);
    return n;
  }

  bool operator==(const PointCloud &) const = default;
};

/// Applies a planar rigid transform to every position; z, colors and labels
/// are untouched.
inline PointCloud transformed(const PointCloud &cloud, const Transform2D &t) {
  PointCloud out = cloud;
  const Eigen::Matrix2d r = t.rotation_matrix();
  for (auto &p : out.positions) {
    const Eigen::Vector2d xy = r * Eigen::Vector2d(p.x(), p.y()) + t.translation;
    p.x() = xy.x();
    p.y() = xy.y();
  }
  return out;
}

} // namespace n2m

#endif // N2M_POINT_CLOUD_HPP_
