#ifndef N2M_JSON_IO_HPP_
#define N2M_JSON_IO_HPP_

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <Eigen/Core>
#include <json.hpp>

#include "n2m/error.hpp"
#include "n2m/geometry.hpp"

namespace n2m {

using json = nlohmann::json;

inline json to_json_vec(const Eigen::VectorXd &v) {
  json j = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    j.push_back(v[i]);
  return j;
}

inline Eigen::VectorXd vec_from_json(const json &j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

inline Eigen::Vector3d vec3_from_json(const json &j) {
  if (!j.is_array() || j.size() != 3)
    fail(ErrorCategory::InvalidConfig, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json pose_to_json(const Pose &p) {
  json j = {{"x", p.x}, {"y", p.y}, {"theta", p.theta}};
  if (p.h)
    j["h"] = *p.h;
  return j;
}

inline Pose pose_from_json(const json &j) {
  Pose p(j.at("x").get<double>(), j.at("y").get<double>(), j.at("theta").get<double>());
  if (j.contains("h"))
    p.h = j["h"].get<double>();
  return p;
}

inline json intrinsics_to_json(const CameraIntrinsics &c) {
  return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width},
          {"height", c.height}, {"depth_min", c.depth_min}, {"depth_max", c.depth_max}};
}

inline CameraIntrinsics intrinsics_from_json(const json &j) {
  CameraIntrinsics c;
  c.fx = j.value("fx", c.fx);
  c.fy = j.value("fy", c.fy);
  c.cx = j.value("cx", c.cx);
  c.cy = j.value("cy", c.cy);
  c.width = j.value("width", c.width);
  c.height = j.value("height", c.height);
  c.depth_min = j.value("depth_min", c.depth_min);
  c.depth_max = j.value("depth_max", c.depth_max);
  c.validate();
  return c;
}

inline json mount_to_json(const CameraMount &m) {
  return {{"offset", {m.offset.x(), m.offset.y(), m.offset.z()}}, {"pitch", m.pitch}};
}

inline CameraMount mount_from_json(const json &j) {
  CameraMount m;
  if (j.contains("offset"))
    m.offset = vec3_from_json(j["offset"]);
  m.pitch = j.value("pitch", m.pitch);
  return m;
}

inline std::string read_text_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCategory::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path &path, const std::string &text) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCategory::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out)
    fail(ErrorCategory::IoFailure, "write failed for " + path.string());
}

inline json read_json_file(const std::filesystem::path &path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    fail(ErrorCategory::IoFailure, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path &path, const json &j) {
  write_text_file(path, j.dump(2) + "\n");
}

} // namespace n2m

#endif // N2M_JSON_IO_HPP_
