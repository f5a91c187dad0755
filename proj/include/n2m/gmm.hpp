#ifndef N2M_GMM_HPP_
#define N2M_GMM_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "n2m/error.hpp"
#include "n2m/geometry.hpp"
#include "n2m/json_io.hpp"
#include "n2m/random.hpp"

namespace n2m {

inline const double kLog2Pi = std::log(2.0 * std::numbers::pi);

/// Gaussian mixture over pose vectors (x, y, theta[, h]). Covariances are
/// held as lower-triangular Cholesky factors, Sigma_k = L_k L_k^T. Theta is a
/// plain Euclidean coordinate here; no wrap-around is modeled.
struct GmmParams {
  std::vector<double> weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> chol_factors;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }

  Eigen::MatrixXd covariance(int k) const { return chol_factors[k] * chol_factors[k].transpose(); }

  void validate(double diag_floor = 0.0) const {
    const int k = components();
    if (k < 1 || static_cast<int>(means.size()) != k || static_cast<int>(chol_factors.size()) != k)
      fail(ErrorCategory::DimensionMismatch, "mixture component arrays disagree");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0))
        fail(ErrorCategory::InvalidConfig, "mixture weight is negative");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      fail(ErrorCategory::InvalidConfig, "mixture weights do not sum to one");
    const int d = dim();
    for (int i = 0; i < k; ++i) {
      if (means[i].size() != d || chol_factors[i].rows() != d || chol_factors[i].cols() != d)
        fail(ErrorCategory::DimensionMismatch, "component shapes disagree");
      for (int r = 0; r < d; ++r) {
        if (!(chol_factors[i](r, r) > 0.0 && chol_factors[i](r, r) >= diag_floor))
          fail(ErrorCategory::InvalidConfig, "Cholesky diagonal must be positive");
        for (int c = r + 1; c < d; ++c)
          if (chol_factors[i](r, c) != 0.0)
            fail(ErrorCategory::InvalidConfig, "Cholesky factor must be lower triangular");
      }
    }
  }

  bool operator==(const GmmParams &) const = default;
};

/// log N(p; mu_k, L_k L_k^T) via a triangular solve.
inline double component_log_density(const GmmParams &gmm, int k, const Eigen::VectorXd &p) {
  const Eigen::MatrixXd &l = gmm.chol_factors[k];
  const Eigen::VectorXd z = l.triangularView<Eigen::Lower>().solve(p - gmm.means[k]);
  double log_det_half = 0.0;
  for (int i = 0; i < l.rows(); ++i)
    log_det_half += std::log(l(i, i));
  return -0.5 * static_cast<double>(p.size()) * kLog2Pi - log_det_half - 0.5 * z.squaredNorm();
}

inline double log_sum_exp(const std::vector<double> &v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m))
    return m;
  double s = 0.0;
  for (double x : v)
    s += std::exp(x - m);
  return m + std::log(s);
}

inline double gmm_log_prob(const GmmParams &gmm, const Eigen::VectorXd &p) {
  if (p.size() != gmm.dim())
    fail(ErrorCategory::DimensionMismatch, "pose dimension does not match the mixture");
  std::vector<double> terms(gmm.weights.size());
  for (int k = 0; k < gmm.components(); ++k)
    terms[k] = std::log(gmm.weights[k]) + component_log_density(gmm, k, p);
  return log_sum_exp(terms);
}

inline double gmm_log_prob(const GmmParams &gmm, const Pose &p) { return gmm_log_prob(gmm, p.to_vector()); }

inline int draw_component(const std::vector<double> &weights, Rng &rng) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc)
      return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

/// Component from the weights, then mu_k + L_k z; theta is canonicalized.
inline Eigen::VectorXd gmm_sample_vector(const GmmParams &gmm, Rng &rng, int *component = nullptr) {
  const int k = draw_component(gmm.weights, rng);
  if (component)
    *component = k;
  Eigen::VectorXd z(gmm.dim());
  for (int i = 0; i < z.size(); ++i)
    z[i] = standard_normal(rng);
  return gmm.means[k] + gmm.chol_factors[k].triangularView<Eigen::Lower>() * z;
}

inline Pose gmm_sample(const GmmParams &gmm, Rng &rng, int *component = nullptr) {
  return Pose::from_vector(gmm_sample_vector(gmm, rng, component));
}

inline Pose gmm_sample(const GmmParams &gmm, std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, 0x6a3));
  return gmm_sample(gmm, rng);
}

/// Mean of the heaviest component.
inline Pose gmm_max_weight_mean(const GmmParams &gmm) {
  const auto it = std::max_element(gmm.weights.begin(), gmm.weights.end());
  return Pose::from_vector(gmm.means[static_cast<std::size_t>(it - gmm.weights.begin())]);
}

inline json gmm_to_json(const GmmParams &g) {
  json comps = json::array();
  for (int k = 0; k < g.components(); ++k) {
    json l = json::array();
    for (int r = 0; r < g.dim(); ++r)
      for (int c = 0; c <= r; ++c)
        l.push_back(g.chol_factors[k](r, c));
    comps.push_back({{"weight", g.weights[k]}, {"mean", to_json_vec(g.means[k])}, {"chol_lower", l}});
  }
  return {{"dim", g.dim()}, {"components", comps}};
}

inline GmmParams gmm_from_json(const json &j) {
  GmmParams g;
  const int d = j.at("dim").get<int>();
  for (const auto &c : j.at("components")) {
    g.weights.push_back(c.at("weight").get<double>());
    g.means.push_back(vec_from_json(c.at("mean")));
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    std::size_t idx = 0;
    for (int r = 0; r < d; ++r)
      for (int col = 0; col <= r; ++col)
        l(r, col) = c.at("chol_lower").at(idx++).get<double>();
    g.chol_factors.push_back(l);
  }
  g.validate();
  return g;
}

} // namespace n2m

#endif // N2M_GMM_HPP_
