#ifndef N2M_LOSS_HPP_
#define N2M_LOSS_HPP_

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "n2m/dataset.hpp"
#include "n2m/error.hpp"
#include "n2m/gmm.hpp"
#include "n2m/model.hpp"

// Training objective, summed over the batch:
//   total = sum_i [ -log P_i(p_i) ] - alpha_w H_w - alpha_dist D - alpha_mode H_mode
// where each regularizer is evaluated on sample i's predicted mixture and
// summed over the batch:
//   H_w    = -sum_k w_k log w_k
//   D      = sum_{k<l} min(m_kl, cap),  m_kl = (mu_k - mu_l)^T Sigma_avg^{-1} (mu_k - mu_l),
//            Sigma_avg = mean_k Sigma_k
//   H_mode = sum_k w_k H_k,  H_k = d/2 (1 + ln 2 pi) + 1/2 ln |Sigma_k|
namespace n2m {

struct LossConfig {
  double alpha_w = 0.01;
  double alpha_dist = 0.001;
  double alpha_mode = 0.001;
  /// Per-pair ceiling on the inter-mode term inside the loss; 0 disables it.
  /// Uncapped, the term is unbounded and rewards parking an unused component
  /// far away with a collapsed covariance.
  double dist_cap = 9.0;

  void validate() const {
    for (double a : {alpha_w, alpha_dist, alpha_mode, dist_cap})
      if (!(std::isfinite(a) && a >= 0.0))
        fail(ErrorCategory::InvalidConfig, "loss coefficients must be finite and non-negative");
  }
};

inline json loss_config_to_json(const LossConfig &c) {
  return {{"alpha_w", c.alpha_w}, {"alpha_dist", c.alpha_dist}, {"alpha_mode", c.alpha_mode}, {"dist_cap", c.dist_cap}};
}

inline LossConfig loss_config_from_json(const json &j) {
  LossConfig c;
  c.alpha_w = j.value("alpha_w", c.alpha_w);
  c.alpha_dist = j.value("alpha_dist", c.alpha_dist);
  c.alpha_mode = j.value("alpha_mode", c.alpha_mode);
  c.dist_cap = j.value("dist_cap", c.dist_cap);
  c.validate();
  return c;
}

struct LossBreakdown {
  double nll = 0.0;
  double h_w = 0.0;
  double d_inter = 0.0;
  double h_mode = 0.0;
  double total = 0.0;

  void finalize(const LossConfig &cfg) {
    total = nll - cfg.alpha_w * h_w - cfg.alpha_dist * d_inter - cfg.alpha_mode * h_mode;
  }
};

inline double entropy_of_weights(std::span<const double> weights) {
  double h = 0.0;
  for (double w : weights)
    if (w > 0.0)
      h -= w * std::log(w);
  return h;
}

inline Eigen::MatrixXd average_covariance(const std::vector<Eigen::MatrixXd> &chol_factors) {
  const auto d = chol_factors.front().rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (const auto &l : chol_factors)
    a += l * l.transpose();
  return a / static_cast<double>(chol_factors.size());
}

/// Sum over pairs of the squared Mahalanobis distance under the average
/// covariance, each pair clipped at `cap` when cap > 0.
inline double inter_mode_distance(const std::vector<Eigen::VectorXd> &means,
                                  const std::vector<Eigen::MatrixXd> &chol_factors, double cap = 0.0) {
  if (means.size() < 2)
    return 0.0;
  const Eigen::LLT<Eigen::MatrixXd> avg(average_covariance(chol_factors));
  double d = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j) {
      const Eigen::VectorXd delta = means[i] - means[j];
      const double m = delta.dot(avg.solve(delta));
      d += cap > 0.0 ? std::min(m, cap) : m;
    }
  return d;
}

inline double gaussian_entropy(const Eigen::MatrixXd &chol) {
  const auto d = static_cast<double>(chol.rows());
  double h = 0.5 * d * (1.0 + kLog2Pi);
  for (Eigen::Index i = 0; i < chol.rows(); ++i)
    h += std::log(chol(i, i));
  return h;
}

inline double mode_entropy(const GmmParams &gmm) {
  double h = 0.0;
  for (int k = 0; k < gmm.components(); ++k)
    h += gmm.weights[static_cast<std::size_t>(k)] * gaussian_entropy(gmm.chol_factors[static_cast<std::size_t>(k)]);
  return h;
}

/// Loss terms of one predicted mixture against one label. When d_raw is given
/// it receives d(total)/d(raw head outputs) for this sample.
inline LossBreakdown mixture_loss(const Eigen::VectorXd &raw, const Eigen::VectorXd &label, const ModelConfig &mc,
                                  const LossConfig &cfg, Eigen::VectorXd *d_raw = nullptr) {
  const int kc = mc.components, d = mc.pose_dim, block = mc.block_size();
  if (label.size() != d)
    fail(ErrorCategory::DimensionMismatch, "label dimension does not match the model");
  const GmmParams g = gmm_from_raw(raw, kc, d, mc.diag_floor);
  const auto ks = static_cast<std::size_t>(kc);

  // Per-component Mahalanobis pieces.
  std::vector<Eigen::VectorXd> z(ks), wvec(ks);
  std::vector<double> log_terms(ks), entropies(ks);
  for (std::size_t k = 0; k < ks; ++k) {
    const auto lt = g.chol_factors[k].triangularView<Eigen::Lower>();
    z[k] = lt.solve(label - g.means[k]);
    wvec[k] = lt.transpose().solve(z[k]);
    double log_det_half = 0.0;
    for (int i = 0; i < d; ++i)
      log_det_half += std::log(g.chol_factors[k](i, i));
    log_terms[k] = std::log(g.weights[k]) - 0.5 * d * kLog2Pi - log_det_half - 0.5 * z[k].squaredNorm();
    entropies[k] = 0.5 * d * (1.0 + kLog2Pi) + log_det_half;
  }
  const double lse = log_sum_exp(log_terms);

  LossBreakdown out;
  out.nll = -lse;
  out.h_w = entropy_of_weights(g.weights);
  out.d_inter = inter_mode_distance(g.means, g.chol_factors, cfg.dist_cap);
  out.h_mode = 0.0;
  for (std::size_t k = 0; k < ks; ++k)
    out.h_mode += g.weights[k] * entropies[k];
  out.finalize(cfg);
  if (!d_raw)
    return out;

  // Gradients with respect to logits, means and Cholesky factors, then
  // through the parameter maps to the raw outputs.
  std::vector<double> d_logit(ks, 0.0);
  std::vector<Eigen::VectorXd> d_mean(ks, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> d_chol(ks, Eigen::MatrixXd::Zero(d, d));

  for (std::size_t k = 0; k < ks; ++k) {
    const double r = std::exp(log_terms[k] - lse);
    d_logit[k] += g.weights[k] - r;
    d_mean[k] += -r * wvec[k];
    Eigen::MatrixXd dl = (wvec[k] * z[k].transpose()).triangularView<Eigen::Lower>();
    for (int i = 0; i < d; ++i)
      dl(i, i) -= 1.0 / g.chol_factors[k](i, i);
    d_chol[k] += -r * dl;
  }

  if (cfg.alpha_w != 0.0) {
    for (std::size_t k = 0; k < ks; ++k) {
      const double lw = g.weights[k] > 0.0 ? std::log(g.weights[k]) : 0.0;
      d_logit[k] += -cfg.alpha_w * (-g.weights[k] * (lw + out.h_w));
    }
  }

  if (cfg.alpha_dist != 0.0 && ks > 1) {
    const Eigen::MatrixXd avg = average_covariance(g.chol_factors);
    const Eigen::LLT<Eigen::MatrixXd> llt(avg);
    const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < ks; ++i)
      for (std::size_t j = i + 1; j < ks; ++j) {
        const Eigen::VectorXd delta = g.means[i] - g.means[j];
        const Eigen::VectorXd gd = 2.0 * (inv * delta);
        if (cfg.dist_cap > 0.0 && 0.5 * delta.dot(gd) >= cfg.dist_cap)
          continue; // clipped pair
        scatter += delta * delta.transpose();
        d_mean[i] += -cfg.alpha_dist * gd;
        d_mean[j] -= -cfg.alpha_dist * gd;
      }
    const Eigen::MatrixXd grad_avg = -inv * scatter * inv;
    for (std::size_t k = 0; k < ks; ++k) {
      Eigen::MatrixXd dl = ((2.0 / static_cast<double>(ks)) * grad_avg * g.chol_factors[k]).triangularView<Eigen::Lower>();
      d_chol[k] += -cfg.alpha_dist * dl;
    }
  }

  if (cfg.alpha_mode != 0.0) {
    for (std::size_t k = 0; k < ks; ++k) {
      d_logit[k] += -cfg.alpha_mode * g.weights[k] * (entropies[k] - out.h_mode);
      for (int i = 0; i < d; ++i)
        d_chol[k](i, i) += -cfg.alpha_mode * g.weights[k] / g.chol_factors[k](i, i);
    }
  }

  d_raw->setZero(raw.size());
  for (std::size_t k = 0; k < ks; ++k) {
    const int o = static_cast<int>(k) * block;
    (*d_raw)[o] = d_logit[k];
    d_raw->segment(o + 1, d) = d_mean[k];
    for (int i = 0; i < d; ++i)
      (*d_raw)[o + 1 + d + i] = d_chol[k](i, i) * sigmoid(raw[o + 1 + d + i]);
    int idx = o + 1 + 2 * d;
    for (int r = 1; r < d; ++r)
      for (int c = 0; c < r; ++c)
        (*d_raw)[idx++] = d_chol[k](r, c);
  }
  return out;
}

namespace detail {

inline void check_batch(const ModelConfig &mc, std::span<const TrainSample> batch) {
  if (batch.empty())
    fail(ErrorCategory::EmptyDataset, "loss needs a non-empty batch");
  for (const auto &s : batch) {
    check_point_count(mc, s.observation.size());
    if (s.label.dim() != mc.pose_dim)
      fail(ErrorCategory::DimensionMismatch, "label dimension does not match the model");
  }
}

} // namespace detail

template <PointEncoder E>
LossBreakdown loss(const MixtureDensityNet<E> &params, std::span<const TrainSample> batch, const LossConfig &cfg) {
  detail::check_batch(params.config, batch);
  LossBreakdown sum;
  for (const auto &s : batch) {
    const auto fp = forward_pass(params, cloud_features(s.observation));
    const LossBreakdown one = mixture_loss(fp.raw, s.label.to_vector(), params.config, cfg);
    sum.nll += one.nll;
    sum.h_w += one.h_w;
    sum.d_inter += one.d_inter;
    sum.h_mode += one.h_mode;
  }
  sum.finalize(cfg);
  return sum;
}

template <PointEncoder E> struct GradientResult {
  MixtureDensityNet<E> grad;
  LossBreakdown loss;
};

/// Exact gradient of the batch total by reverse-mode differentiation.
template <PointEncoder E>
GradientResult<E> gradient(const MixtureDensityNet<E> &params, std::span<const TrainSample> batch,
                           const LossConfig &cfg) {
  detail::check_batch(params.config, batch);
  GradientResult<E> out{params.zeros_like(), {}};
  for (const auto &s : batch) {
    const Eigen::MatrixXd input = cloud_features(s.observation);
    const auto fp = forward_pass(params, input);
    Eigen::VectorXd d_raw;
    const LossBreakdown one = mixture_loss(fp.raw, s.label.to_vector(), params.config, cfg, &d_raw);
    out.loss.nll += one.nll;
    out.loss.h_w += one.h_w;
    out.loss.d_inter += one.d_inter;
    out.loss.h_mode += one.h_mode;
    backward_pass(params, input, fp, d_raw, out.grad);
  }
  out.loss.finalize(cfg);
  return out;
}

} // namespace n2m

#endif // N2M_LOSS_HPP_
