#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "n2m/dataset.hpp"
#include "n2m/harness.hpp"

using namespace n2m;
namespace fs = std::filesystem;

namespace {

void expect_pose_near(const Pose &a, const Pose &b, double tol) {
  EXPECT_NEAR(a.x, b.x, tol);
  EXPECT_NEAR(a.y, b.y, tol);
  EXPECT_NEAR(canonical_angle(a.theta - b.theta), 0.0, tol);
  ASSERT_EQ(a.h.has_value(), b.h.has_value());
  if (a.h)
    EXPECT_NEAR(*a.h, *b.h, tol);
}

PointCloud random_cloud(Rng &rng, int n) {
  PointCloud c;
  for (int i = 0; i < n; ++i)
    c.push_back({uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, 0, 1.5)}, {0.1, 0.2, 0.3}, i % 3);
  return c;
}

double nearest_distance(const PointCloud &c, const Eigen::Vector2d &p) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto &q : c.positions)
    best = std::min(best, (q.head<2>() - p).norm());
  return best;
}

class DatasetFixture : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    task_ = new TaskSetup(standard_task(true));
    raw_ = new RawDataset(collect_rollouts(*task_, 2, 2024));
    cfg_ = new AugmentConfig(augment_config_for(*task_));
    cfg_->M = 8;
    cfg_->n_points = 256;
  }
  static void TearDownTestSuite() {
    delete task_;
    delete raw_;
    delete cfg_;
  }
  static inline TaskSetup *task_ = nullptr;
  static inline RawDataset *raw_ = nullptr;
  static inline AugmentConfig *cfg_ = nullptr;
};

} // namespace

TEST(ResampleToN, DownsampleIsDistinctSubset) {
  Rng rng = make_rng(51);
  const PointCloud c = random_cloud(rng, 10000);
  const PointCloud r = resample_to_n(c, 8192, 3);
  ASSERT_EQ(r.size(), 8192u);
  std::set<std::tuple<double, double, double>> in, seen;
  for (const auto &p : c.positions)
    in.insert({p.x(), p.y(), p.z()});
  for (const auto &p : r.positions) {
    EXPECT_TRUE(in.count({p.x(), p.y(), p.z()}));
    seen.insert({p.x(), p.y(), p.z()});
  }
  EXPECT_EQ(seen.size(), 8192u);
}

TEST(ResampleToN, PadsFromInputOnly) {
  Rng rng = make_rng(52);
  const PointCloud c = random_cloud(rng, 5000);
  const PointCloud r = resample_to_n(c, 8192, 4);
  ASSERT_EQ(r.size(), 8192u);
  std::set<std::tuple<double, double, double>> in;
  for (const auto &p : c.positions)
    in.insert({p.x(), p.y(), p.z()});
  for (const auto &p : r.positions)
    EXPECT_TRUE(in.count({p.x(), p.y(), p.z()}));
}

TEST(ResampleToN, ExactLengthAndGuards) {
  Rng rng = make_rng(53);
  for (int t = 0; t < 50; ++t) {
    const int m = 1 + static_cast<int>(uniform_index(rng, 300));
    const int n = 1 + static_cast<int>(uniform_index(rng, 300));
    EXPECT_EQ(resample_to_n(random_cloud(rng, m), n, t).size(), static_cast<std::size_t>(n));
  }
  try {
    resample_to_n(PointCloud{}, 10, 0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.category(), ErrorCategory::EmptyCloud);
  }
}

TEST(Jitter, ZeroConfigIsIdentity) {
  Rng rng = make_rng(54);
  TrainSample s;
  s.observation = random_cloud(rng, 50);
  s.label = Pose(0.4, -0.2, 0.3, 0.55);
  AugmentConfig cfg;
  cfg.jitter_max_translation = 0.0;
  cfg.jitter_max_rotation = 0.0;
  const JitteredSample j = apply_se2_jitter(s, cfg, 5);
  EXPECT_EQ(j.sample.observation, s.observation);
  EXPECT_EQ(j.sample.label, s.label);
}

TEST(Jitter, RigidAndCoTransformsLabel) {
  Rng rng = make_rng(55);
  AugmentConfig cfg;
  for (int t = 0; t < 30; ++t) {
    TrainSample s;
    s.observation = random_cloud(rng, 40);
    s.label = Pose(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -3, 3), 0.4);
    const JitteredSample j = apply_se2_jitter(s, cfg, static_cast<std::uint64_t>(t));
    EXPECT_LE(j.applied.translation.norm(), cfg.jitter_max_translation + 1e-12);
    const auto &a = s.observation.positions, &b = j.sample.observation.positions;
    for (std::size_t i = 0; i + 1 < a.size(); ++i) {
      EXPECT_NEAR((a[i] - a[i + 1]).norm(), (b[i] - b[i + 1]).norm(), 1e-12);
      EXPECT_EQ(a[i].z(), b[i].z());
    }
    EXPECT_EQ(j.sample.observation.colors, s.observation.colors);
    EXPECT_EQ(j.sample.observation.labels, s.observation.labels);
    expect_pose_near(j.sample.label, transform_pose(j.applied, s.label), 1e-12);
    EXPECT_EQ(j.sample.label.h, s.label.h);
    EXPECT_NEAR(nearest_distance(s.observation, {s.label.x, s.label.y}),
                nearest_distance(j.sample.observation, {j.sample.label.x, j.sample.label.y}), 1e-9);
  }
}

TEST(Jitter, RotationCoversFullCircleByDefault) {
  AugmentConfig cfg;
  double lo = 0, hi = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    Rng rng = make_rng(s);
    const double r = draw_se2_jitter(cfg, rng).rotation;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_LT(lo, -3.0);
  EXPECT_GT(hi, 3.0);
}

TEST_F(DatasetFixture, CollectedLabelsAreCollisionFree) {
  ASSERT_EQ(raw_->entries.size(), 2u);
  for (std::size_t i = 0; i < raw_->entries.size(); ++i) {
    EXPECT_FALSE(collides(raw_->scenes[i], raw_->entries[i].label_pose, task_->view.footprint_radius));
    EXPECT_TRUE(oracle_success(raw_->scenes[i], raw_->entries[i].label_pose, task_->oracle));
    EXPECT_FALSE(raw_->entries[i].stitched.cloud.empty());
  }
}

TEST_F(DatasetFixture, ViewpointsPassBothFilters) {
  const auto &e = raw_->entries[0];
  const Scene &scene = raw_->scenes[0];
  const auto views = sample_viewpoints(scene, e.stitched, *cfg_, 7);
  EXPECT_LE(views.size(), static_cast<std::size_t>(cfg_->M));
  for (const Pose &v : views) {
    EXPECT_FALSE(collides(scene, v, cfg_->footprint_radius));
    const PointCloud seen = render(e.stitched, v, cfg_->intr, cfg_->mount);
    EXPECT_GE(seen.count_label(kTargetLabel), static_cast<std::size_t>(cfg_->min_visible_points));
  }
  EXPECT_EQ(views.size(), sample_viewpoints(scene, e.stitched, *cfg_, 7).size());
}

TEST_F(DatasetFixture, UnfilteredRegionKeepsAllCandidates) {
  // Re-check every candidate independently: an unfiltered candidate set
  // must come back whole.
  AugmentConfig c = *cfg_;
  c.min_visible_points = 0;
  c.region.half_size = 0.05;
  c.region.heading_half_range = 0.0;
  const auto views = sample_viewpoints(raw_->scenes[0], raw_->entries[0].stitched, c, 8);
  EXPECT_EQ(views.size(), static_cast<std::size_t>(c.M));
}

TEST_F(DatasetFixture, RegionInsideObstacleGivesNoValidViewpoint) {
  AugmentConfig c = *cfg_;
  const Box &counter = raw_->scenes[0].obstacles.front();
  c.region.centers = {Pose(counter.center.x(), counter.center.y(), 0.0)};
  c.region.half_size = 0.05;
  try {
    sample_viewpoints(raw_->scenes[0], raw_->entries[0].stitched, c, 9);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.category(), ErrorCategory::NoValidViewpoint);
  }
}

TEST_F(DatasetFixture, LabelInvariantAcrossViewpoints) {
  const auto &e = raw_->entries[1];
  const auto samples = augment_entry(e, raw_->scenes[1], *cfg_, 10);
  ASSERT_FALSE(samples.empty());
  EXPECT_LE(samples.size(), static_cast<std::size_t>(cfg_->M));
  for (const auto &s : samples) {
    EXPECT_EQ(s.observation.size(), static_cast<std::size_t>(cfg_->n_points));
    expect_pose_near(ego_to_world(s.label, s.viewpoint), e.label_pose, 1e-9);
    EXPECT_EQ(s.source_scene_id, e.scene_id);
  }
}

TEST_F(DatasetFixture, ViewpointAtLabelGivesZeroLabel) {
  const auto &e = raw_->entries[0];
  const Pose l = world_to_ego(e.label_pose, Pose(e.label_pose.x, e.label_pose.y, e.label_pose.theta));
  expect_pose_near(l, Pose(0, 0, 0, *e.label_pose.h), 1e-12);
}

TEST_F(DatasetFixture, RawRoundTripIsBitIdentical) {
  const fs::path dir = fs::temp_directory_path() / "n2m_test_raw";
  fs::remove_all(dir);
  save_raw_dataset(dir, *raw_);
  const RawDataset back = load_raw_dataset(dir);
  ASSERT_EQ(back.entries.size(), raw_->entries.size());
  for (std::size_t i = 0; i < back.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].stitched.cloud, raw_->entries[i].stitched.cloud);
    EXPECT_EQ(back.entries[i].label_pose, raw_->entries[i].label_pose);
    EXPECT_EQ(back.scenes[i], raw_->scenes[i]);
  }
}

TEST_F(DatasetFixture, TrainRoundTripAndGuards) {
  TrainDataset ds = build_training_set(raw_prefix(*raw_, 1), *cfg_, 11);
  ds.samples.resize(std::min<std::size_t>(ds.samples.size(), 10));
  const fs::path dir = fs::temp_directory_path() / "n2m_test_train";
  fs::remove_all(dir);
  save_train_dataset(dir, ds);
  const TrainDataset back = load_train_dataset(dir);
  ASSERT_EQ(back.samples.size(), ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].observation, ds.samples[i].observation);
    EXPECT_EQ(back.samples[i].label, ds.samples[i].label);
    EXPECT_EQ(back.samples[i].viewpoint, ds.samples[i].viewpoint);
    EXPECT_EQ(back.samples[i].source_scene_id, ds.samples[i].source_scene_id);
    EXPECT_EQ(back.samples[i].viewpoint_id, ds.samples[i].viewpoint_id);
  }

  const fs::path empty = fs::temp_directory_path() / "n2m_test_train_empty";
  fs::remove_all(empty);
  save_train_dataset(empty, TrainDataset{});
  EXPECT_TRUE(load_train_dataset(empty).samples.empty());

  std::ofstream(dir / "manifest.json") << R"({"format": "something-else", "version": 1})";
  try {
    load_train_dataset(dir);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.category(), ErrorCategory::FormatVersionMismatch);
  }
}

TEST_F(DatasetFixture, PipelineIsDeterministic) {
  const TrainDataset a = build_training_set(*raw_, *cfg_, 12);
  const TrainDataset b = build_training_set(*raw_, *cfg_, 12);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_EQ(a.samples[i].observation, b.samples[i].observation);
    EXPECT_EQ(a.samples[i].label, b.samples[i].label);
  }
}
