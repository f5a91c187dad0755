#ifndef N2M_TRAIN_HPP_
#define N2M_TRAIN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "n2m/dataset.hpp"
#include "n2m/error.hpp"
#include "n2m/json_io.hpp"
#include "n2m/loss.hpp"
#include "n2m/model.hpp"
#include "n2m/random.hpp"

namespace n2m {

enum class LrSchedule { Constant, Cosine };

struct TrainConfig {
  int batch_size = 8;
  int steps = 2000;
  double learning_rate = 1e-3;
  LrSchedule schedule = LrSchedule::Cosine;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  /// Validation NLL is evaluated (and the best checkpoint kept) every this many steps and at the last step.
  int eval_every = 100;
  /// On-the-fly planar jitter; disabled when both maxima are zero.
  double jitter_max_translation = 1.0;
  double jitter_max_rotation = kPi;
  /// With more than one component, seed each component's mean bias with a
  /// k-means center of the training labels.
  bool init_means_from_labels = true;

  void validate() const {
    if (batch_size < 1)
      fail(ErrorCategory::InvalidConfig, "batch_size must be at least 1");
    if (steps < 1)
      fail(ErrorCategory::InvalidConfig, "steps must be at least 1");
    if (!(learning_rate > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
      fail(ErrorCategory::InvalidConfig, "invalid optimizer settings");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      fail(ErrorCategory::InvalidConfig, "validation_fraction must lie in [0, 1)");
    if (eval_every < 1)
      fail(ErrorCategory::InvalidConfig, "eval_every must be at least 1");
    if (!(grad_clip >= 0.0) || !(jitter_max_translation >= 0.0) || !(jitter_max_rotation >= 0.0))
      fail(ErrorCategory::InvalidConfig, "clip and jitter limits must be non-negative");
  }

  double lr_at(int step) const {
    if (schedule == LrSchedule::Constant)
      return learning_rate;
    return 0.5 * learning_rate * (1.0 + std::cos(kPi * static_cast<double>(step) / static_cast<double>(steps)));
  }
};

inline json train_config_to_json(const TrainConfig &c) {
  return {{"batch_size", c.batch_size},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"schedule", c.schedule == LrSchedule::Cosine ? "cosine" : "constant"},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"validation_fraction", c.validation_fraction},
          {"eval_every", c.eval_every},
          {"jitter_max_translation", c.jitter_max_translation},
          {"jitter_max_rotation", c.jitter_max_rotation},
          {"init_means_from_labels", c.init_means_from_labels}};
}

inline TrainConfig train_config_from_json(const json &j, TrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("schedule")) {
    const auto s = j["schedule"].get<std::string>();
    if (s == "constant")
      c.schedule = LrSchedule::Constant;
    else if (s == "cosine")
      c.schedule = LrSchedule::Cosine;
    else
      fail(ErrorCategory::InvalidConfig, "unknown schedule '" + s + "'");
  }
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.seed = j.value("seed", c.seed);
  c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.jitter_max_translation = j.value("jitter_max_translation", c.jitter_max_translation);
  c.jitter_max_rotation = j.value("jitter_max_rotation", c.jitter_max_rotation);
  c.init_means_from_labels = j.value("init_means_from_labels", c.init_means_from_labels);
  c.validate();
  return c;
}

template <PointEncoder E> std::vector<std::span<double>> parameter_spans(MixtureDensityNet<E> &m) {
  std::vector<std::span<double>> out;
  m.for_each_tensor([&](const std::string &, std::span<double> s, Eigen::Index, Eigen::Index) { out.push_back(s); });
  return out;
}

/// Adaptive-moment optimizer with bias correction.
template <PointEncoder E> class Adam {
public:
  Adam(const MixtureDensityNet<E> &params, double beta1, double beta2, double epsilon)
      : m_(params.zeros_like()), v_(params.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  int steps_taken() const { return t_; }

  void step(MixtureDensityNet<E> &params, MixtureDensityNet<E> &grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    auto p = parameter_spans(params), g = parameter_spans(grad), m = parameter_spans(m_), v = parameter_spans(v_);
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t i = 0; i < p[t].size(); ++i) {
        const double gi = g[t][i];
        m[t][i] = beta1_ * m[t][i] + (1.0 - beta1_) * gi;
        v[t][i] = beta2_ * v[t][i] + (1.0 - beta2_) * gi * gi;
        p[t][i] -= lr * (m[t][i] / c1) / (std::sqrt(v[t][i] / c2) + eps_);
      }
  }

private:
  MixtureDensityNet<E> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

template <PointEncoder E> double gradient_norm(MixtureDensityNet<E> &grad) {
  double s = 0.0;
  for (auto span : parameter_spans(grad))
    for (double x : span)
      s += x * x;
  return std::sqrt(s);
}

template <PointEncoder E> void scale_gradient(MixtureDensityNet<E> &grad, double factor) {
  for (auto span : parameter_spans(grad))
    for (double &x : span)
      x *= factor;
}

struct HistoryRecord {
  int step = 0;
  double learning_rate = 0.0;
  /// Batch sums.
  LossBreakdown loss;
  std::optional<double> val_nll; // mean per validation sample
};

inline json history_record_to_json(const HistoryRecord &r) {
  json j = {{"step", r.step},       {"lr", r.learning_rate},     {"nll", r.loss.nll},
            {"h_w", r.loss.h_w},    {"d_inter", r.loss.d_inter}, {"h_mode", r.loss.h_mode},
            {"total", r.loss.total}};
  j["val_nll"] = r.val_nll ? json(*r.val_nll) : json(nullptr);
  return j;
}

inline std::string history_to_jsonl(const std::vector<HistoryRecord> &h) {
  std::string out;
  for (const auto &r : h)
    out += history_record_to_json(r).dump() + "\n";
  return out;
}

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<int> validation_scenes;
};

/// Holds out round(fraction * scenes) scene ids (at least one when there are
/// two or more scenes and fraction > 0). Viewpoints of a scene never straddle the split.
inline DataSplit split_by_scene(const std::vector<TrainSample> &samples, double fraction, std::uint64_t seed) {
  std::set<int> ids;
  for (const auto &s : samples)
    ids.insert(s.source_scene_id);
  std::vector<int> scenes(ids.begin(), ids.end());
  std::size_t n_val = 0;
  if (fraction > 0.0 && scenes.size() >= 2)
    n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(scenes.size()))),
                                    1, scenes.size() - 1);
  Rng rng = make_rng(derive_seed(seed, 0x5b1));
  for (std::size_t i = 0; i < n_val; ++i)
    std::swap(scenes[i], scenes[i + uniform_index(rng, scenes.size() - i)]);
  DataSplit split;
  split.validation_scenes.assign(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(split.validation_scenes.begin(), split.validation_scenes.end());
  const std::set<int> val(split.validation_scenes.begin(), split.validation_scenes.end());
  for (std::size_t i = 0; i < samples.size(); ++i)
    (val.count(samples[i].source_scene_id) ? split.validation : split.train).push_back(i);
  return split;
}

template <PointEncoder E>
double mean_nll(const MixtureDensityNet<E> &m, const std::vector<TrainSample> &samples,
                const std::vector<std::size_t> &idx) {
  double s = 0.0;
  for (std::size_t i : idx)
    s -= gmm_log_prob(predict_gmm(m, samples[i].observation), samples[i].label.to_vector());
  return s / static_cast<double>(idx.size());
}

/// Lloyd's k-means with k-means++ seeding. Returns k centers (duplicates when
/// there are fewer distinct points than k).
inline std::vector<Eigen::VectorXd> kmeans(const std::vector<Eigen::VectorXd> &points, int k, std::uint64_t seed,
                                           int iterations = 50) {
  if (points.empty() || k < 1)
    fail(ErrorCategory::InvalidConfig, "k-means needs points and k >= 1");
  Rng rng = make_rng(derive_seed(seed, 0x4e5));
  std::vector<Eigen::VectorXd> centers{points[uniform_index(rng, points.size())]};
  std::vector<double> d2(points.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::numeric_limits<double>::infinity();
      for (const auto &c : centers)
        d2[i] = std::min(d2[i], (points[i] - c).squaredNorm());
      total += d2[i];
    }
    if (total == 0.0) {
      centers.push_back(centers.back());
      continue;
    }
    double u = uniform(rng, 0.0, total);
    std::size_t pick = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      u -= d2[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(points[pick]);
  }
  std::vector<int> assign(points.size(), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      int best = 0;
      for (int c = 1; c < k; ++c)
        if ((points[i] - centers[static_cast<std::size_t>(c)]).squaredNorm() <
            (points[i] - centers[static_cast<std::size_t>(best)]).squaredNorm())
          best = c;
      changed |= assign[i] != best;
      assign[i] = best;
    }
    if (!changed)
      break;
    for (int c = 0; c < k; ++c) {
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(points.front().size());
      int n = 0;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (assign[i] == c) {
          sum += points[i];
          ++n;
        }
      if (n > 0)
        centers[static_cast<std::size_t>(c)] = sum / n;
    }
  }
  return centers;
}

/// Writes `centers` into the mean slots of the output-layer bias.
template <PointEncoder E> void set_mean_biases(MixtureDensityNet<E> &m, const std::vector<Eigen::VectorXd> &centers) {
  const int d = m.config.pose_dim, block = m.config.block_size();
  for (int k = 0; k < m.config.components; ++k)
    m.head.back().b.segment(k * block + 1, d) = centers[static_cast<std::size_t>(k)];
}

struct TrainResult {
  ModelParams model;
  std::vector<HistoryRecord> history;
  int best_step = 0;
  std::optional<double> best_val_nll;
  std::vector<int> validation_scenes;
};

/// Mini-batch training. Batches are drawn with replacement from the training
/// split; each drawn sample gets a fresh planar jitter. Returns the parameters
/// with the lowest validation NLL seen at an evaluation step (the final
/// parameters when there is no validation split).
inline TrainResult train(const std::vector<TrainSample> &dataset, const ModelConfig &model_cfg,
                         const TrainConfig &train_cfg, const LossConfig &loss_cfg,
                         const std::function<void(const HistoryRecord &)> &on_record = {}) {
  model_cfg.validate();
  train_cfg.validate();
  loss_cfg.validate();
  if (dataset.empty())
    fail(ErrorCategory::EmptyDataset, "training set is empty");

  const DataSplit split = split_by_scene(dataset, train_cfg.validation_fraction, train_cfg.seed);
  AugmentConfig jitter;
  jitter.jitter_max_translation = train_cfg.jitter_max_translation;
  jitter.jitter_max_rotation = train_cfg.jitter_max_rotation;

  TrainResult result;
  result.validation_scenes = split.validation_scenes;
  ModelParams params = init_model(model_cfg, derive_seed(train_cfg.seed, 0x1a17));
  if (model_cfg.components > 1 && train_cfg.init_means_from_labels) {
    std::vector<Eigen::VectorXd> labels;
    for (std::size_t i : split.train)
      labels.push_back(dataset[i].label.to_vector());
    set_mean_biases(params, kmeans(labels, model_cfg.components, train_cfg.seed));
  }
  Adam<PointNetEncoder> adam(params, train_cfg.beta1, train_cfg.beta2, train_cfg.epsilon);
  Rng rng = make_rng(derive_seed(train_cfg.seed, 0xba7c));
  result.model = params;

  std::vector<TrainSample> batch(static_cast<std::size_t>(train_cfg.batch_size));
  for (int step = 0; step < train_cfg.steps; ++step) {
    for (int b = 0; b < train_cfg.batch_size; ++b) {
      const std::size_t pick = split.train[uniform_index(rng, split.train.size())];
      const std::uint64_t js = derive_seed(train_cfg.seed, 0x717e, static_cast<std::uint64_t>(step) * 4096 + b);
      batch[static_cast<std::size_t>(b)] = apply_se2_jitter(dataset[pick], jitter, js).sample;
    }
    auto g = gradient(params, std::span<const TrainSample>(batch), loss_cfg);
    if (train_cfg.grad_clip > 0.0) {
      const double n = gradient_norm(g.grad);
      if (n > train_cfg.grad_clip)
        scale_gradient(g.grad, train_cfg.grad_clip / n);
    }
    HistoryRecord rec;
    rec.step = step;
    rec.learning_rate = train_cfg.lr_at(step);
    rec.loss = g.loss;
    adam.step(params, g.grad, rec.learning_rate);

    const bool last = step + 1 == train_cfg.steps;
    if (!split.validation.empty() && ((step + 1) % train_cfg.eval_every == 0 || last)) {
      rec.val_nll = mean_nll(params, dataset, split.validation);
      if (!result.best_val_nll || *rec.val_nll < *result.best_val_nll) {
        result.best_val_nll = rec.val_nll;
        result.best_step = step + 1;
        result.model = params;
      }
    }
    if (on_record)
      on_record(rec);
    result.history.push_back(std::move(rec));
  }
  if (split.validation.empty()) {
    result.model = params;
    result.best_step = train_cfg.steps;
  }
  return result;
}

} // namespace n2m

#endif // N2M_TRAIN_HPP_
