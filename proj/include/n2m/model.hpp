#ifndef N2M_MODEL_HPP_
#define N2M_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "n2m/error.hpp"
#include "n2m/gmm.hpp"
#include "n2m/json_io.hpp"
#include "n2m/point_cloud.hpp"
#include "n2m/random.hpp"

namespace n2m {

/// Each point contributes (x, y, z, r, g, b).
constexpr int kPointFeatures = 6;

struct ModelConfig {
  int components = 1;
  int pose_dim = 3;
  std::vector<int> point_widths{64, 128, 256};
  std::vector<int> head_widths{256};
  int n_points = 8192;
  double diag_floor = 1e-3;

  int block_size() const { return 1 + pose_dim + pose_dim * (pose_dim + 1) / 2; }
  int head_outputs() const { return components * block_size(); }

  void validate() const {
    if (components < 1)
      fail(ErrorCategory::InvalidConfig, "mixture needs at least one component");
    if (pose_dim != 3 && pose_dim != 4)
      fail(ErrorCategory::InvalidConfig, "pose dimension must be 3 or 4");
    if (point_widths.empty())
      fail(ErrorCategory::InvalidConfig, "encoder needs at least one per-point layer");
    for (int w : point_widths)
      if (w < 1)
        fail(ErrorCategory::InvalidConfig, "layer widths must be positive");
    for (int w : head_widths)
      if (w < 1)
        fail(ErrorCategory::InvalidConfig, "layer widths must be positive");
    if (n_points < 1)
      fail(ErrorCategory::InvalidConfig, "n_points must be positive");
    if (!(diag_floor > 0.0))
      fail(ErrorCategory::InvalidConfig, "diag_floor must be positive");
  }

  bool operator==(const ModelConfig &) const = default;
};

inline json model_config_to_json(const ModelConfig &c) {
  return {{"components", c.components}, {"pose_dim", c.pose_dim},   {"point_widths", c.point_widths},
          {"head_widths", c.head_widths}, {"n_points", c.n_points}, {"diag_floor", c.diag_floor}};
}

inline ModelConfig model_config_from_json(const json &j) {
  ModelConfig c;
  c.components = j.value("components", c.components);
  c.pose_dim = j.value("pose_dim", c.pose_dim);
  if (j.contains("point_widths"))
    c.point_widths = j["point_widths"].get<std::vector<int>>();
  if (j.contains("head_widths"))
    c.head_widths = j["head_widths"].get<std::vector<int>>();
  c.n_points = j.value("n_points", c.n_points);
  c.diag_floor = j.value("diag_floor", c.diag_floor);
  c.validate();
  return c;
}

/// Fully connected layer; `w` is (inputs x outputs) so a row batch maps as X * w.
struct Dense {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;

  static Dense he_init(int in, int out, Rng &rng, double scale = 1.0) {
    Dense d{Eigen::MatrixXd(in, out), Eigen::VectorXd::Zero(out)};
    const double sd = scale * std::sqrt(2.0 / in);
    for (Eigen::Index i = 0; i < d.w.size(); ++i)
      d.w.data()[i] = sd * standard_normal(rng);
    return d;
  }

  Dense zeros_like() const { return {Eigen::MatrixXd::Zero(w.rows(), w.cols()), Eigen::VectorXd::Zero(b.size())}; }
  bool operator==(const Dense &) const = default;
};

inline std::span<double> tensor_span(Eigen::MatrixXd &m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
inline std::span<double> tensor_span(Eigen::VectorXd &v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

/// Per-point features and their max-pool over points.
struct EncoderFeatures {
  Eigen::MatrixXd per_point; // N x F, after the final nonlinearity
  Eigen::VectorXd global;    // F
};

/// What the encoder's backward pass needs from its forward pass.
struct EncoderCache {
  Eigen::VectorXd pooled_pre;           // max over points of the last pre-activation
  std::vector<Eigen::Index> argmax_row; // point index achieving it, per feature
};

/// Input matrix (N x 6) for a cloud.
inline Eigen::MatrixXd cloud_features(const PointCloud &cloud) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(cloud.size()), kPointFeatures);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x.row(r) << cloud.positions[i].x(), cloud.positions[i].y(), cloud.positions[i].z(), cloud.colors[i].x(),
        cloud.colors[i].y(), cloud.colors[i].z();
  }
  return x;
}

/// Shared per-point MLP (ReLU after every layer) followed by a max-pool over
/// points. Permutation invariant by construction.
class PointNetEncoder {
public:
  std::vector<Dense> layers;

  static PointNetEncoder init(const std::vector<int> &widths, Rng &rng) {
    PointNetEncoder e;
    int in = kPointFeatures;
    for (int w : widths) {
      e.layers.push_back(Dense::he_init(in, w, rng));
      in = w;
    }
    return e;
  }

  int feature_dim() const { return static_cast<int>(layers.back().w.cols()); }

  /// Points are pushed through the MLP in row blocks with a running max-pool,
  /// so the full N x F activation is only materialized when requested.
  Eigen::VectorXd encode(const Eigen::MatrixXd &input, EncoderCache *cache = nullptr,
                         Eigen::MatrixXd *per_point = nullptr) const {
    constexpr Eigen::Index kBlockRows = 128;
    const Eigen::Index n = input.rows(), f = feature_dim();
    Eigen::VectorXd pooled = Eigen::VectorXd::Constant(f, -std::numeric_limits<double>::infinity());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(f), 0);
    if (per_point)
      per_point->resize(n, f);
    Eigen::MatrixXd a, z;
    for (Eigen::Index r0 = 0; r0 < n; r0 += kBlockRows) {
      const Eigen::Index rows = std::min(kBlockRows, n - r0);
      a = input.middleRows(r0, rows);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        z.noalias() = a * layers[l].w;
        z.rowwise() += layers[l].b.transpose();
        if (l + 1 < layers.size())
          a = z.cwiseMax(0.0);
      }
      for (Eigen::Index j = 0; j < f; ++j) {
        Eigen::Index i;
        const double v = z.col(j).maxCoeff(&i);
        if (v > pooled[j]) {
          pooled[j] = v;
          arg[static_cast<std::size_t>(j)] = r0 + i;
        }
      }
      if (per_point)
        per_point->middleRows(r0, rows) = z.cwiseMax(0.0);
    }
    if (cache) {
      cache->pooled_pre = pooled;
      cache->argmax_row = std::move(arg);
    }
    return pooled.cwiseMax(0.0);
  }

  /// Accumulates parameter gradients into `grad` given dLoss/dglobal. Only the
  /// points that win the max-pool receive gradient, so just those rows are
  /// recomputed.
  void backward(const Eigen::MatrixXd &input, const EncoderCache &cache, const Eigen::VectorXd &d_global,
                PointNetEncoder &grad) const {
    const Eigen::Index f = d_global.size();
    std::vector<Eigen::Index> rows;
    for (Eigen::Index j = 0; j < f; ++j)
      if (d_global[j] != 0.0 && cache.pooled_pre[j] > 0.0)
        rows.push_back(cache.argmax_row[static_cast<std::size_t>(j)]);
    if (rows.empty())
      return;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    auto local = [&](Eigen::Index r) {
      return static_cast<Eigen::Index>(std::lower_bound(rows.begin(), rows.end(), r) - rows.begin());
    };

    const auto s = static_cast<Eigen::Index>(rows.size());
    std::vector<Eigen::MatrixXd> acts(layers.size()), pres(layers.size());
    acts[0].resize(s, input.cols());
    for (Eigen::Index i = 0; i < s; ++i)
      acts[0].row(i) = input.row(rows[static_cast<std::size_t>(i)]);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      pres[l].noalias() = acts[l] * layers[l].w;
      pres[l].rowwise() += layers[l].b.transpose();
      if (l + 1 < layers.size())
        acts[l + 1] = pres[l].cwiseMax(0.0);
    }

    Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(s, f);
    for (Eigen::Index j = 0; j < f; ++j)
      if (d_global[j] != 0.0 && cache.pooled_pre[j] > 0.0)
        dz(local(cache.argmax_row[static_cast<std::size_t>(j)]), j) += d_global[j];

    for (std::size_t l = layers.size(); l-- > 0;) {
      grad.layers[l].w.noalias() += acts[l].transpose() * dz;
      grad.layers[l].b += dz.colwise().sum().transpose();
      if (l == 0)
        break;
      Eigen::MatrixXd da = dz * layers[l].w.transpose();
      dz = da.cwiseProduct((pres[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }

  PointNetEncoder zeros_like() const {
    PointNetEncoder z;
    for (const auto &l : layers)
      z.layers.push_back(l.zeros_like());
    return z;
  }

  template <class F> void for_each_tensor(F &&f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      f("encoder." + std::to_string(l) + ".weight", tensor_span(layers[l].w), layers[l].w.rows(), layers[l].w.cols());
      f("encoder." + std::to_string(l) + ".bias", tensor_span(layers[l].b), layers[l].b.size(), Eigen::Index{1});
    }
  }

  bool operator==(const PointNetEncoder &) const = default;
};

/// Contract for pluggable point-cloud encoders.
template <class E>
concept PointEncoder = requires(E e, const E ce, const Eigen::MatrixXd &x, const EncoderCache &c,
                                const Eigen::VectorXd &g) {
  { ce.encode(x, nullptr, nullptr) } -> std::same_as<Eigen::VectorXd>;
  { ce.backward(x, c, g, e) };
  { ce.feature_dim() } -> std::convertible_to<int>;
  { ce.zeros_like() } -> std::same_as<E>;
};

struct HeadCache {
  std::vector<Eigen::VectorXd> inputs; // input to every head layer
  std::vector<Eigen::VectorXd> pres;   // pre-activation of every hidden layer
};

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
inline double sigmoid(double x) {
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus_inverse(double y) { return y + std::log(-std::expm1(-y)); }

/// Maps raw head outputs to mixture parameters. Per component the raw block is
/// [logit | mean (d) | L diagonal pre-softplus (d) | L strict lower (row-major)].
inline GmmParams gmm_from_raw(const Eigen::VectorXd &raw, int components, int d, double diag_floor) {
  const int block = 1 + d + d * (d + 1) / 2;
  if (raw.size() != components * block)
    fail(ErrorCategory::DimensionMismatch, "raw head output has the wrong length");
  GmmParams g;
  double max_logit = -INFINITY;
  for (int k = 0; k < components; ++k)
    max_logit = std::max(max_logit, raw[k * block]);
  double z = 0.0;
  g.weights.resize(static_cast<std::size_t>(components));
  for (int k = 0; k < components; ++k) {
    g.weights[static_cast<std::size_t>(k)] = std::exp(raw[k * block] - max_logit);
    z += g.weights[static_cast<std::size_t>(k)];
  }
  for (auto &w : g.weights)
    w /= z;
  for (int k = 0; k < components; ++k) {
    const int o = k * block;
    g.means.push_back(raw.segment(o + 1, d));
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
      l(i, i) = softplus(raw[o + 1 + d + i]) + diag_floor;
    int idx = o + 1 + 2 * d;
    for (int r = 1; r < d; ++r)
      for (int c = 0; c < r; ++c)
        l(r, c) = raw[idx++];
    g.chol_factors.push_back(l);
  }
  return g;
}

/// Encoder + mixture head. The encoder type is a template parameter so other
/// permutation-invariant encoders can be dropped in.
template <PointEncoder Encoder> struct MixtureDensityNet {
  ModelConfig config;
  Encoder encoder;
  std::vector<Dense> head;
  std::uint64_t seed = 0;

  MixtureDensityNet zeros_like() const {
    MixtureDensityNet z;
    z.config = config;
    z.encoder = encoder.zeros_like();
    for (const auto &l : head)
      z.head.push_back(l.zeros_like());
    z.seed = seed;
    return z;
  }

  /// Visits every trainable tensor in declared (checkpoint) order.
  template <class F> void for_each_tensor(F &&f) {
    encoder.for_each_tensor(f);
    for (std::size_t l = 0; l < head.size(); ++l) {
      f("head." + std::to_string(l) + ".weight", tensor_span(head[l].w), head[l].w.rows(), head[l].w.cols());
      f("head." + std::to_string(l) + ".bias", tensor_span(head[l].b), head[l].b.size(), Eigen::Index{1});
    }
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for_each_tensor([&](const std::string &, std::span<double> s, Eigen::Index, Eigen::Index) { n += s.size(); });
    return n;
  }

  bool operator==(const MixtureDensityNet &) const = default;
};

using ModelParams = MixtureDensityNet<PointNetEncoder>;

inline ModelParams init_model(const ModelConfig &config, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(derive_seed(seed, 0x1417));
  ModelParams m;
  m.config = config;
  m.seed = seed;
  m.encoder = PointNetEncoder::init(config.point_widths, rng);
  int in = m.encoder.feature_dim();
  for (int w : config.head_widths) {
    m.head.push_back(Dense::he_init(in, w, rng));
    in = w;
  }
  // Output layer starts near zero so the initial mixture is governed by the
  // bias: uniform weights, zero means, unit-scale covariances.
  Dense out = Dense::he_init(in, config.head_outputs(), rng, 1e-3);
  const int d = config.pose_dim;
  const double diag_raw = softplus_inverse(1.0 - config.diag_floor);
  for (int k = 0; k < config.components; ++k)
    for (int i = 0; i < d; ++i)
      out.b[k * config.block_size() + 1 + d + i] = diag_raw;
  m.head.push_back(std::move(out));
  return m;
}

template <PointEncoder E> struct ForwardPass {
  Eigen::VectorXd global;
  Eigen::VectorXd raw;
  GmmParams gmm;
  EncoderCache encoder_cache;
  HeadCache head_cache;
};

inline void check_point_count(const ModelConfig &config, std::size_t n) {
  if (static_cast<int>(n) != config.n_points)
    fail(ErrorCategory::WrongPointCount,
         "expected " + std::to_string(config.n_points) + " points, got " + std::to_string(n));
}

template <PointEncoder E>
ForwardPass<E> forward_pass(const MixtureDensityNet<E> &m, const Eigen::MatrixXd &input,
                            Eigen::MatrixXd *per_point = nullptr) {
  check_point_count(m.config, static_cast<std::size_t>(input.rows()));
  ForwardPass<E> fp;
  fp.global = m.encoder.encode(input, &fp.encoder_cache, per_point);
  Eigen::VectorXd h = fp.global;
  for (std::size_t l = 0; l < m.head.size(); ++l) {
    fp.head_cache.inputs.push_back(h);
    Eigen::VectorXd z = m.head[l].w.transpose() * h + m.head[l].b;
    if (l + 1 < m.head.size()) {
      fp.head_cache.pres.push_back(z);
      h = z.cwiseMax(0.0);
    } else {
      fp.raw = std::move(z);
    }
  }
  fp.gmm = gmm_from_raw(fp.raw, m.config.components, m.config.pose_dim, m.config.diag_floor);
  return fp;
}

/// Backpropagates dLoss/draw through head and encoder, accumulating into grad.
template <PointEncoder E>
void backward_pass(const MixtureDensityNet<E> &m, const Eigen::MatrixXd &input, const ForwardPass<E> &fp,
                   const Eigen::VectorXd &d_raw, MixtureDensityNet<E> &grad) {
  Eigen::VectorXd dz = d_raw;
  for (std::size_t l = m.head.size(); l-- > 0;) {
    grad.head[l].w.noalias() += fp.head_cache.inputs[l] * dz.transpose();
    grad.head[l].b += dz;
    Eigen::VectorXd da = m.head[l].w * dz;
    if (l == 0) {
      m.encoder.backward(input, fp.encoder_cache, da, grad.encoder);
      break;
    }
    dz = da.cwiseProduct((fp.head_cache.pres[l - 1].array() > 0.0).template cast<double>().matrix());
  }
}

template <PointEncoder E> std::pair<GmmParams, EncoderFeatures> forward(const MixtureDensityNet<E> &m, const PointCloud &cloud) {
  check_point_count(m.config, cloud.size());
  EncoderFeatures feats;
  ForwardPass<E> fp = forward_pass(m, cloud_features(cloud), &feats.per_point);
  feats.global = fp.global;
  return {std::move(fp.gmm), std::move(feats)};
}

/// Mixture only; skips materializing per-point features.
template <PointEncoder E> GmmParams predict_gmm(const MixtureDensityNet<E> &m, const PointCloud &cloud) {
  check_point_count(m.config, cloud.size());
  return forward_pass(m, cloud_features(cloud)).gmm;
}

/// Cosine similarity of each point's feature to the pooled feature, in [-1, 1].
/// Points with an all-zero feature score 0.
template <PointEncoder E> std::vector<double> saliency(const MixtureDensityNet<E> &m, const PointCloud &cloud) {
  const auto [gmm, feats] = forward(m, cloud);
  const double gnorm = feats.global.norm();
  std::vector<double> out(cloud.size(), 0.0);
  if (gnorm == 0.0)
    return out;
  for (Eigen::Index i = 0; i < feats.per_point.rows(); ++i) {
    const double n = feats.per_point.row(i).norm();
    if (n > 0.0)
      out[static_cast<std::size_t>(i)] = std::clamp(feats.per_point.row(i).dot(feats.global) / (n * gnorm), -1.0, 1.0);
  }
  return out;
}

// ---- checkpoint ------------------------------------------------------------
//
// Layout: 8-byte magic "N2MCKPT\0", uint32 version, uint64 header length,
// JSON header (config, seeds, tensor table), then every tensor as raw
// little-endian float64 in the declared order.

constexpr char kCheckpointMagic[8] = {'N', '2', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path &path, ModelParams m, const json &metadata = json::object()) {
  json tensors = json::array();
  std::vector<double> data;
  m.for_each_tensor([&](const std::string &name, std::span<double> s, Eigen::Index rows, Eigen::Index cols) {
    tensors.push_back({{"name", name}, {"shape", {rows, cols}}});
    data.insert(data.end(), s.begin(), s.end());
  });
  const json header = {{"format", "n2m-checkpoint"},
                       {"config", model_config_to_json(m.config)},
                       {"init_seed", m.seed},
                       {"metadata", metadata},
                       {"tensors", tensors}};
  const std::string h = header.dump();
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out)
    fail(ErrorCategory::IoFailure, "cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char *>(&version), sizeof(version));
  const std::uint64_t len = h.size();
  out.write(reinterpret_cast<const char *>(&len), sizeof(len));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  out.write(reinterpret_cast<const char *>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out)
    fail(ErrorCategory::IoFailure, "write failed for " + path.string());
}

struct LoadedCheckpoint {
  ModelParams model;
  json metadata;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail(ErrorCategory::IoFailure, "cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    fail(ErrorCategory::FormatVersionMismatch, path.string() + " is not an n2m checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char *>(&version), sizeof(version));
  if (version != kCheckpointVersion)
    fail(ErrorCategory::FormatVersionMismatch, "unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char *>(&len), sizeof(len));
  if (!in || len > (1ULL << 30))
    fail(ErrorCategory::IoFailure, "corrupt checkpoint header in " + path.string());
  std::string h(len, '\0');
  in.read(h.data(), static_cast<std::streamsize>(len));
  if (!in)
    fail(ErrorCategory::IoFailure, "truncated checkpoint header in " + path.string());
  json header;
  try {
    header = json::parse(h);
  } catch (const json::exception &e) {
    fail(ErrorCategory::IoFailure, std::string("malformed checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out;
  out.model = init_model(model_config_from_json(header.at("config")), header.at("init_seed").get<std::uint64_t>());
  out.metadata = header.value("metadata", json::object());
  const json &tensors = header.at("tensors");
  std::size_t t = 0;
  out.model.for_each_tensor([&](const std::string &name, std::span<double> s, Eigen::Index rows, Eigen::Index cols) {
    if (t >= tensors.size() || tensors[t].at("name").get<std::string>() != name ||
        tensors[t].at("shape").at(0).get<Eigen::Index>() != rows || tensors[t].at("shape").at(1).get<Eigen::Index>() != cols)
      fail(ErrorCategory::FormatVersionMismatch, "checkpoint tensor table does not match its config at " + name);
    in.read(reinterpret_cast<char *>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
    if (!in)
      fail(ErrorCategory::IoFailure, "truncated tensor data for " + name);
    ++t;
  });
  if (t != tensors.size())
    fail(ErrorCategory::FormatVersionMismatch, "checkpoint has extra tensors");
  return out;
}

} // namespace n2m

#endif // N2M_MODEL_HPP_
