#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "n2m/loss.hpp"
#include "n2m/train.hpp"

using namespace n2m;

namespace {

ModelConfig small_config(int k, int d) {
  ModelConfig c;
  c.components = k;
  c.pose_dim = d;
  c.point_widths = {12, 16, 20};
  c.head_widths = {24};
  c.n_points = 32;
  return c;
}

TrainSample random_sample(Rng &rng, int n, int d) {
  TrainSample s;
  for (int i = 0; i < n; ++i)
    s.observation.push_back({uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0, 1.5)},
                            {uniform(rng, 0, 1), uniform(rng, 0, 1), uniform(rng, 0, 1)}, 0);
  s.label = d == 3 ? Pose(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1))
                   : Pose(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0, 1));
  return s;
}

/// Random parameters with a non-trivial mixture (uneven weights, spread means).
ModelParams random_model(int k, int d, std::uint64_t seed) {
  ModelParams m = init_model(small_config(k, d), seed);
  m.head.back().w *= 60.0;
  return m;
}

GmmParams iso(std::vector<double> w, std::vector<Eigen::VectorXd> mu, std::vector<double> sigma) {
  GmmParams g;
  g.weights = std::move(w);
  g.means = std::move(mu);
  for (double s : sigma)
    g.chol_factors.push_back(s * Eigen::MatrixXd::Identity(g.means.front().size(), g.means.front().size()));
  return g;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

} // namespace

TEST(EntropyOfWeights, Examples) {
  EXPECT_NEAR(entropy_of_weights(std::vector<double>{0.5, 0.5}), 0.6931471805599453, 1e-12);
  EXPECT_EQ(entropy_of_weights(std::vector<double>{1.0}), 0.0);
  EXPECT_NEAR(entropy_of_weights(std::vector<double>{0.3, 0.7}), 0.6108643020548935, 1e-12);
  EXPECT_EQ(entropy_of_weights(std::vector<double>{0.0, 1.0, 0.0}), 0.0);
  EXPECT_NEAR(entropy_of_weights(std::vector<double>(5, 0.2)), std::log(5.0), 1e-12);
}

TEST(InterModeDistance, Examples) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(3), e = Eigen::Vector3d(1, 0, 0);
  const Eigen::MatrixXd i3 = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_EQ(inter_mode_distance({z}, {i3}), 0.0);
  EXPECT_EQ(inter_mode_distance({e, e}, {i3, 2 * i3}), 0.0);
  EXPECT_NEAR(inter_mode_distance({z, e}, {i3, i3}), 1.0, 1e-15);
  // Average covariance uses L L^T: (I + 4I)/2 = 2.5 I.
  EXPECT_NEAR(inter_mode_distance({z, e}, {i3, 2 * i3}), 1.0 / 2.5, 1e-15);
  const Eigen::VectorXd far = Eigen::Vector3d(5, 0, 0);
  EXPECT_NEAR(inter_mode_distance({z, far}, {i3, i3}), 25.0, 1e-12);
  EXPECT_NEAR(inter_mode_distance({z, far}, {i3, i3}, 9.0), 9.0, 1e-12);
  EXPECT_NEAR(inter_mode_distance({z, e, far}, {i3, i3, i3}, 9.0), 1.0 + 9.0 + 9.0, 1e-12);
}

TEST(InterModeDistance, CappedPairsCarryNoGradient) {
  const ModelConfig mc = small_config(2, 3);
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(mc.head_outputs());
  raw[1] = 4.0; // component 0 mean x, far from component 1
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 3; ++i)
      raw[k * mc.block_size() + 4 + i] = softplus_inverse(1.0 - mc.diag_floor);
  const Eigen::VectorXd label = Eigen::Vector3d(0.0, 0.0, 0.0);
  Eigen::VectorXd with_dist, without;
  mixture_loss(raw, label, mc, LossConfig{0.0, 0.5, 0.0, 9.0}, &with_dist);
  mixture_loss(raw, label, mc, LossConfig{0.0, 0.0, 0.0, 9.0}, &without);
  EXPECT_LE((with_dist - without).cwiseAbs().maxCoeff(), 1e-15);
  mixture_loss(raw, label, mc, LossConfig{0.0, 0.5, 0.0, 0.0}, &with_dist);
  EXPECT_GT((with_dist - without).cwiseAbs().maxCoeff(), 0.1);
}

TEST(ModeEntropy, Examples) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  EXPECT_NEAR(mode_entropy(iso({1.0}, {z}, {1.0})), 4.256815599614018, 1e-12);
  EXPECT_NEAR(mode_entropy(iso({1.0}, {z}, {2.0})) - mode_entropy(iso({1.0}, {z}, {1.0})), 1.5 * std::log(4.0), 1e-12);
  EXPECT_NEAR(mode_entropy(iso({0.5, 0.5}, {z, z}, {1.0, 2.0})), 4.256815599614018 + 0.5 * 2.0794415416798357, 1e-12);
}

TEST(Loss, BreakdownIdentityAndZeroCoefficients) {
  Rng rng = make_rng(61);
  const ModelParams m = random_model(2, 3, 1);
  std::vector<TrainSample> batch{random_sample(rng, 32, 3), random_sample(rng, 32, 3)};
  const LossConfig cfg;
  const LossBreakdown l = loss(m, std::span<const TrainSample>(batch), cfg);
  EXPECT_EQ(l.total, l.nll - cfg.alpha_w * l.h_w - cfg.alpha_dist * l.d_inter - cfg.alpha_mode * l.h_mode);
  const LossBreakdown z = loss(m, std::span<const TrainSample>(batch), LossConfig{0, 0, 0});
  EXPECT_EQ(z.total, z.nll);
  EXPECT_EQ(z.nll, l.nll);
}

TEST(Loss, SingleComponentHasNoMixtureRegularizers) {
  Rng rng = make_rng(62);
  const ModelParams m = random_model(1, 4, 2);
  std::vector<TrainSample> batch{random_sample(rng, 32, 4)};
  const LossBreakdown l = loss(m, std::span<const TrainSample>(batch), LossConfig{});
  EXPECT_EQ(l.h_w, 0.0);
  EXPECT_EQ(l.d_inter, 0.0);
}

TEST(Loss, NllMatchesLogProb) {
  Rng rng = make_rng(63);
  const ModelParams m = random_model(3, 4, 3);
  std::vector<TrainSample> batch{random_sample(rng, 32, 4), random_sample(rng, 32, 4)};
  double expect = 0.0;
  for (const auto &s : batch)
    expect -= gmm_log_prob(predict_gmm(m, s.observation), s.label);
  EXPECT_NEAR(loss(m, std::span<const TrainSample>(batch), LossConfig{}).nll, expect, 1e-10);
}

TEST(Loss, DuplicatedSampleDoublesTotal) {
  Rng rng = make_rng(64);
  const ModelParams m = random_model(2, 3, 4);
  const TrainSample s = random_sample(rng, 32, 3);
  std::vector<TrainSample> one{s}, two{s, s};
  EXPECT_EQ(loss(m, std::span<const TrainSample>(two), LossConfig{}).total,
            2.0 * loss(m, std::span<const TrainSample>(one), LossConfig{}).total);
}

TEST(Loss, Guards) {
  Rng rng = make_rng(65);
  const ModelParams m = random_model(2, 3, 5);
  std::vector<TrainSample> wrong_n{random_sample(rng, 31, 3)};
  std::vector<TrainSample> wrong_d{random_sample(rng, 32, 4)};
  try {
    loss(m, std::span<const TrainSample>(wrong_n), LossConfig{});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.category(), ErrorCategory::WrongPointCount);
  }
  try {
    loss(m, std::span<const TrainSample>(wrong_d), LossConfig{});
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.category(), ErrorCategory::DimensionMismatch);
  }
  EXPECT_THROW(loss_config_from_json({{"alpha_w", -1.0}}), Error);
}

TEST(MixtureLoss, RawGradientMatchesFiniteDifferences) {
  Rng rng = make_rng(66);
  for (int k : {1, 2, 3})
    for (int d : {3, 4}) {
      const ModelConfig mc = small_config(k, d);
      const LossConfig cfg{0.3, 0.2, 0.1}; // large coefficients so every term matters
      for (int t = 0; t < 5; ++t) {
        Eigen::VectorXd raw(mc.head_outputs()), label(d);
        for (Eigen::Index i = 0; i < raw.size(); ++i)
          raw[i] = uniform(rng, -1, 1);
        for (int i = 0; i < d; ++i)
          label[i] = uniform(rng, -1, 1);
        Eigen::VectorXd g;
        mixture_loss(raw, label, mc, cfg, &g);
        for (Eigen::Index i = 0; i < raw.size(); ++i) {
          const double h = 1e-6;
          Eigen::VectorXd up = raw, dn = raw;
          up[i] += h;
          dn[i] -= h;
          const double fd = (mixture_loss(up, label, mc, cfg).total - mixture_loss(dn, label, mc, cfg).total) / (2 * h);
          EXPECT_LE(rel_err(g[i], fd), 1e-6) << "K=" << k << " d=" << d << " i=" << i;
        }
      }
    }
}

class GradientFd : public ::testing::TestWithParam<std::tuple<int, int>> {};

TEST_P(GradientFd, FiftyParametersWithinTolerance) {
  const auto [k, d] = GetParam();
  Rng rng = make_rng(67 + static_cast<std::uint64_t>(10 * k + d));
  ModelParams m = random_model(k, d, static_cast<std::uint64_t>(k * d));
  std::vector<TrainSample> batch{random_sample(rng, 32, d), random_sample(rng, 32, d), random_sample(rng, 32, d)};
  const std::span<const TrainSample> b(batch);
  const LossConfig cfg{0.05, 0.01, 0.01};
  auto g = gradient(m, b, cfg);
  auto ps = parameter_spans(m);
  auto gs = parameter_spans(g.grad);
  std::size_t total = 0;
  for (auto s : ps)
    total += s.size();
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::size_t flat = uniform_index(rng, total), ti = 0;
    while (flat >= ps[ti].size())
      flat -= ps[ti++].size();
    const double orig = ps[ti][flat], h = 1e-5;
    ps[ti][flat] = orig + h;
    const double up = loss(m, b, cfg).total;
    ps[ti][flat] = orig - h;
    const double dn = loss(m, b, cfg).total;
    ps[ti][flat] = orig;
    worst = std::max(worst, rel_err(gs[ti][flat], (up - dn) / (2 * h)));
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_EQ(g.loss.total, loss(m, b, cfg).total);
}

INSTANTIATE_TEST_SUITE_P(KD, GradientFd, ::testing::Combine(::testing::Values(1, 2), ::testing::Values(3, 4)));

TEST(Gradient, DuplicatedBatchDoubles) {
  Rng rng = make_rng(68);
  ModelParams m = random_model(2, 4, 9);
  const TrainSample s = random_sample(rng, 32, 4);
  std::vector<TrainSample> one{s}, two{s, s};
  auto g1 = gradient(m, std::span<const TrainSample>(one), LossConfig{});
  auto g2 = gradient(m, std::span<const TrainSample>(two), LossConfig{});
  auto a = parameter_spans(g1.grad), b = parameter_spans(g2.grad);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i)
      EXPECT_NEAR(b[t][i], 2.0 * a[t][i], 1e-12 * std::max(1.0, std::abs(a[t][i])));
}

TEST(Gradient, NegativeGradientStepDescends) {
  Rng rng = make_rng(69);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ModelParams m = random_model(2, 3, 20 + seed);
    std::vector<TrainSample> batch{random_sample(rng, 32, 3), random_sample(rng, 32, 3)};
    const std::span<const TrainSample> b(batch);
    const LossConfig cfg;
    auto g = gradient(m, b, cfg);
    const double before = g.loss.total;
    const double norm = gradient_norm(g.grad);
    ASSERT_GT(norm, 0.0);
    auto ps = parameter_spans(m);
    auto gs = parameter_spans(g.grad);
    for (std::size_t t = 0; t < ps.size(); ++t)
      for (std::size_t i = 0; i < ps[t].size(); ++i)
        ps[t][i] -= 1e-4 * gs[t][i] / norm;
    EXPECT_LT(loss(m, b, cfg).total, before);
  }
}
