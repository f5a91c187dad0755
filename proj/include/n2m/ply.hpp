#ifndef N2M_PLY_HPP_
#define N2M_PLY_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "n2m/error.hpp"
#include "n2m/point_cloud.hpp"

// Binary little-endian PLY with double positions and colors, an int label and
// an optional double "saliency" scalar. Header comments carry provenance
// (producing config and seed).
namespace n2m {

static_assert(std::endian::native == std::endian::little, "PLY writer assumes a little-endian host");

struct PlyData {
  PointCloud cloud;
  std::vector<std::string> comments;
  std::optional<std::vector<double>> saliency;
};

inline void write_ply(const std::filesystem::path &path, const PointCloud &cloud,
                      const std::vector<std::string> &comments = {},
                      const std::vector<double> *saliency = nullptr) {
  cloud.validate();
  if (saliency && saliency->size() != cloud.size())
    fail(ErrorCategory::DimensionMismatch, "saliency length differs from cloud size");
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCategory::IoFailure, "cannot write " + path.string());

  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n";
  for (const auto &c : comments) {
    std::string line = c;
    for (auto &ch : line)
      if (ch == '\n' || ch == '\r')
        ch = ' ';
    header << "comment " << line << "\n";
  }
  header << "element vertex " << cloud.size() << "\n"
         << "property double x\nproperty double y\nproperty double z\n"
         << "property double red\nproperty double green\nproperty double blue\n"
         << "property int label\n";
  if (saliency)
    header << "property double saliency\n";
  header << "end_header\n";
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));

  const std::size_t stride = 6 * sizeof(double) + sizeof(std::int32_t) + (saliency ? sizeof(double) : 0);
  std::vector<char> buf(stride * cloud.size());
  char *w = buf.data();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double vals[6] = {cloud.positions[i].x(), cloud.positions[i].y(), cloud.positions[i].z(),
                            cloud.colors[i].x(),    cloud.colors[i].y(),    cloud.colors[i].z()};
    std::memcpy(w, vals, sizeof(vals));
    w += sizeof(vals);
    const std::int32_t label = cloud.labels[i];
    std::memcpy(w, &label, sizeof(label));
    w += sizeof(label);
    if (saliency) {
      std::memcpy(w, &(*saliency)[i], sizeof(double));
      w += sizeof(double);
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out)
    fail(ErrorCategory::IoFailure, "write failed for " + path.string());
}

inline PlyData read_ply(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCategory::IoFailure, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line) || line != "ply")
    fail(ErrorCategory::FormatVersionMismatch, path.string() + " does not start with the ply magic");
  if (!std::getline(in, line) || line != "format binary_little_endian 1.0")
    fail(ErrorCategory::FormatVersionMismatch, path.string() + ": only binary_little_endian 1.0 is supported");

  PlyData data;
  std::size_t count = 0;
  bool have_count = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    if (line == "end_header")
      break;
    if (line.rfind("comment ", 0) == 0) {
      data.comments.push_back(line.substr(8));
      continue;
    }
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || have_count)
        fail(ErrorCategory::FormatVersionMismatch, "unexpected element in " + path.string());
      have_count = true;
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(type + " " + name);
    } else {
      fail(ErrorCategory::FormatVersionMismatch, "unexpected header line: " + line);
    }
  }
  const std::vector<std::string> expected = {"double x",     "double y",    "double z", "double red",
                                             "double green", "double blue", "int label"};
  const bool with_saliency = props.size() == expected.size() + 1 && props.back() == "double saliency";
  if (!have_count || !std::equal(expected.begin(), expected.end(), props.begin(), props.begin() + std::min(props.size(), expected.size())) ||
      !(props.size() == expected.size() || with_saliency))
    fail(ErrorCategory::FormatVersionMismatch, "unsupported vertex layout in " + path.string());

  const std::size_t stride = 6 * sizeof(double) + sizeof(std::int32_t) + (with_saliency ? sizeof(double) : 0);
  std::vector<char> buf(stride * count);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    fail(ErrorCategory::IoFailure, "truncated vertex data in " + path.string());

  data.cloud.reserve(count);
  if (with_saliency)
    data.saliency.emplace(count);
  const char *r = buf.data();
  for (std::size_t i = 0; i < count; ++i) {
    double vals[6];
    std::memcpy(vals, r, sizeof(vals));
    r += sizeof(vals);
    std::int32_t label;
    std::memcpy(&label, r, sizeof(label));
    r += sizeof(label);
    data.cloud.push_back({vals[0], vals[1], vals[2]}, {vals[3], vals[4], vals[5]}, label);
    if (with_saliency) {
      std::memcpy(&(*data.saliency)[i], r, sizeof(double));
      r += sizeof(double);
    }
  }
  return data;
}

} // namespace n2m

#endif // N2M_PLY_HPP_
