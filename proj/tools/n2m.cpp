// n2m command-line front end.
//
// Every subcommand is deterministic given its flags and seeds. Failures print
// one line to stderr of the form
//   error category=<Category> message=<text>
// and exit with 2 (usage), 3 (data) or 4 (budget / selection exhaustion).

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "n2m/n2m.hpp"

namespace fs = std::filesystem;
using namespace n2m;

namespace {

int exit_code(ErrorCategory c) {
  switch (c) {
  case ErrorCategory::UsageError: return 2;
  case ErrorCategory::SelectionExhausted:
  case ErrorCategory::BudgetExhausted:
  case ErrorCategory::RegionEmpty:
  case ErrorCategory::PlacementFailure:
  case ErrorCategory::NoValidViewpoint: return 4;
  default: return 3;
  }
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

json read_config(const std::string &path) {
  if (path.empty())
    return json::object();
  return read_json_file(path);
}

/// A task file is either a task record or a bare scene spec.
TaskSetup task_from_file(const std::string &path) {
  const json j = read_config(path);
  if (j.is_string())
    return task_preset(j.get<std::string>());
  if (j.contains("preset") || j.contains("scene") || j.contains("oracle") || j.contains("regions"))
    return task_from_json(j);
  TaskSetup base = standard_task();
  return make_task("custom", scene_spec_from_json(j), base.oracle);
}

TaskSetup task_for_checkpoint(const std::string &task_file, const json &metadata) {
  if (!task_file.empty())
    return task_from_file(task_file);
  if (metadata.contains("task"))
    return task_from_json(metadata["task"]);
  return standard_task();
}

PointCloud load_observation(const std::string &path, const ModelConfig &mc, std::uint64_t seed) {
  PointCloud cloud = read_ply(path).cloud;
  if (static_cast<int>(cloud.size()) != mc.n_points)
    cloud = resample_to_n(cloud, mc.n_points, seed);
  return cloud;
}

/// Standard scene rendered from its task-area center, sized for the model.
PointCloud synthetic_observation(const ModelConfig &mc, std::uint64_t seed) {
  const TaskSetup task = standard_task(mc.pose_dim == 4);
  const Scene scene = generate_scene(task.scene, seed);
  const PointCloud r = render(scene, task.scene.task_area_center, task.view.intr, task.view.mount);
  return resample_to_n(r, mc.n_points, seed);
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void emit(const std::string &out, const json &j) {
  if (out.empty() || out == "-")
    std::cout << j.dump(2) << "\n";
  else
    write_json_file(out, j);
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Navigation-to-manipulation initial pose prediction toolkit"};
  app.require_subcommand(1);

  std::string spec_file, out, scenes_dir, oracle_file, raw_dir, config_file, data_dir, model_cfg_file, train_cfg_file,
      loss_cfg_file, ckpt, condition, cloud_file, task_file;
  int count = 1, n_success = 1, trials = 300, runs = 200;
  std::uint64_t seed = 0;

  auto *gen = app.add_subcommand("gen-scenes", "Write generated scene records");
  gen->add_option("--spec", spec_file, "Task or scene-spec file")->required();
  gen->add_option("--count", count, "Number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Master seed");
  gen->add_option("--out", out, "Output directory")->required();

  auto *collect = app.add_subcommand("collect", "Collect successful rollouts into a raw dataset");
  collect->add_option("--scenes", scenes_dir, "Directory written by gen-scenes (supplies the generator)")->required();
  collect->add_option("--oracle", oracle_file, "Oracle spec file");
  collect->add_option("--n-success", n_success, "Successful rollouts to collect")->check(CLI::PositiveNumber);
  collect->add_option("--seed", seed, "Master seed");
  collect->add_option("--out", out, "Output directory")->required();

  auto *augment = app.add_subcommand("augment", "Viewpoint augmentation of a raw dataset");
  augment->add_option("--raw", raw_dir, "Raw dataset directory")->required();
  augment->add_option("--config", config_file, "Augmentation config file");
  augment->add_option("--seed", seed, "Master seed");
  augment->add_option("--out", out, "Output directory")->required();

  auto *trn = app.add_subcommand("train", "Train a model on an augmented dataset");
  trn->add_option("--data", data_dir, "Training set directory")->required();
  trn->add_option("--model-cfg", model_cfg_file, "Model config file");
  trn->add_option("--train-cfg", train_cfg_file, "Training config file");
  trn->add_option("--loss-cfg", loss_cfg_file, "Loss config file (default: 'loss' entry of the training config)");
  trn->add_option("--out", out, "Checkpoint path; history goes to <out>.history.jsonl")->required();

  auto *eval = app.add_subcommand("eval", "Evaluate one condition");
  eval->add_option("--ckpt", ckpt, "Checkpoint (required for n2m)");
  eval->add_option("--condition", condition, "reachability | oracle | n2m")
      ->required()
      ->check(CLI::IsMember({"reachability", "oracle", "n2m"}));
  eval->add_option("--trials", trials, "Trials")->check(CLI::PositiveNumber);
  eval->add_option("--seed", seed, "Master seed");
  eval->add_option("--task", task_file, "Task file (default: task recorded in the checkpoint)");
  eval->add_option("--out", out, "Report path")->required();

  auto *infer = app.add_subcommand("infer", "Predict a pose distribution for one observation");
  infer->add_option("--ckpt", ckpt, "Checkpoint")->required();
  infer->add_option("--cloud", cloud_file, "Body-frame observation (PLY)")->required();
  infer->add_option("--seed", seed, "Seed for resampling and selection");
  infer->add_option("--out", out, "Output record");

  auto *sal = app.add_subcommand("saliency", "Per-point saliency of an observation");
  sal->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sal->add_option("--cloud", cloud_file, "Body-frame observation (PLY)")->required();
  sal->add_option("--seed", seed, "Seed for resampling");
  sal->add_option("--out", out, "Score-colored PLY")->required();

  auto *bench = app.add_subcommand("bench", "Forward pass + selection latency");
  bench->add_option("--ckpt", ckpt, "Checkpoint")->required();
  bench->add_option("--runs", runs, "Timed runs")->check(CLI::PositiveNumber);
  bench->add_option("--cloud", cloud_file, "Observation (default: synthetic standard scene)");
  bench->add_option("--seed", seed, "Seed");
  bench->add_option("--out", out, "Statistics record (default: stdout)");

  auto *suite = app.add_subcommand("suite", "Run the full experiment grid");
  suite->add_option("--config", config_file, "Suite config file")->required();
  suite->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << "error category=UsageError message=" << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*gen) {
      const TaskSetup task = task_from_file(spec_file);
      const json cfg = task_to_json(task);
      json ids = json::array();
      for (int i = 0; i < count; ++i) {
        const Scene s = generate_scene(task.scene, derive_seed(seed, 0x9e5, static_cast<std::uint64_t>(i)));
        write_json_file(fs::path(out) / ("scene_" + std::to_string(i) + ".json"), scene_to_json(s));
        ids.push_back(i);
      }
      write_json_file(fs::path(out) / "manifest.json",
                      {{"format", "n2m-scenes"}, {"version", 1}, {"task", cfg}, {"seed", seed}, {"count", count},
                       {"scene_ids", ids}});
    } else if (*collect) {
      const fs::path m = fs::path(scenes_dir) / "manifest.json";
      if (!fs::exists(m))
        fail(ErrorCategory::EmptyDataset, "no manifest.json in " + scenes_dir);
      const json manifest = read_json_file(m);
      if (manifest.value("format", std::string()) != "n2m-scenes")
        fail(ErrorCategory::FormatVersionMismatch, scenes_dir + " is not a scene directory");
      TaskSetup task = task_from_json(manifest.at("task"));
      if (!oracle_file.empty())
        task = make_task(task.name, task.scene, oracle_from_json(read_config(oracle_file), task.oracle));
      const RawDataset raw = collect_rollouts(task, n_success, seed);
      save_raw_dataset(out, raw);
    } else if (*augment) {
      const RawDataset raw = load_raw_dataset(raw_dir);
      if (raw.entries.empty())
        fail(ErrorCategory::EmptyDataset, raw_dir + " has no entries");
      const TaskSetup task = raw.config.contains("task") ? task_from_json(raw.config["task"]) : standard_task();
      const AugmentConfig cfg = augment_config_from_json(read_config(config_file), augment_config_for(task));
      TrainDataset ds = build_training_set(raw, cfg, seed);
      ds.config["task"] = task_to_json(task);
      save_train_dataset(out, ds);
    } else if (*trn) {
      const TrainDataset ds = load_train_dataset(data_dir);
      if (ds.samples.empty())
        fail(ErrorCategory::EmptyDataset, data_dir + " has no samples");
      ModelConfig mc = model_config_from_json(read_config(model_cfg_file));
      const json tj = read_config(train_cfg_file);
      const TrainConfig tc = train_config_from_json(tj);
      const LossConfig lc = loss_config_from_json(!loss_cfg_file.empty() ? read_config(loss_cfg_file)
                                                                        : tj.value("loss", json::object()));
      const TrainResult r = train(ds.samples, mc, tc, lc);
      json meta = {{"model", model_config_to_json(mc)},
                   {"train", train_config_to_json(tc)},
                   {"loss", loss_config_to_json(lc)},
                   {"seed", tc.seed},
                   {"data", data_dir},
                   {"best_step", r.best_step},
                   {"best_val_nll", r.best_val_nll ? json(*r.best_val_nll) : json(nullptr)},
                   {"validation_scenes", r.validation_scenes}};
      if (ds.config.contains("task"))
        meta["task"] = ds.config["task"];
      save_checkpoint(out, r.model, meta);
      write_text_file(out + ".history.jsonl", history_to_jsonl(r.history));
    } else if (*eval) {
      const Condition c = condition_from_name(condition);
      std::optional<LoadedCheckpoint> loaded;
      if (c == Condition::N2M && ckpt.empty())
        fail(ErrorCategory::UsageError, "the n2m condition needs --ckpt");
      if (!ckpt.empty())
        loaded = load_checkpoint(ckpt);
      const TaskSetup task = task_for_checkpoint(task_file, loaded ? loaded->metadata : json::object());
      const ExperimentReport rep = run_condition(task, c, trials, seed, loaded ? &loaded->model : nullptr);
      json j = report_to_json(rep);
      j["config"] = {{"task", task_to_json(task)}, {"checkpoint", ckpt}};
      write_json_file(out, j);
    } else if (*infer) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt);
      const PointCloud obs = load_observation(cloud_file, ck.model.config, seed);
      const GmmParams g = predict(ck.model, obs);
      SelectionConfig sc;
      const Pose chosen = select_pose(g, [](const Pose &) { return false; }, sc, seed);
      emit(out, {{"checkpoint", ckpt},
                 {"cloud", cloud_file},
                 {"seed", seed},
                 {"frame", "body"},
                 {"gmm", gmm_to_json(g)},
                 {"selected_pose", pose_to_json(chosen)},
                 {"max_weight_mean", pose_to_json(gmm_max_weight_mean(g))}});
    } else if (*sal) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt);
      PointCloud obs = load_observation(cloud_file, ck.model.config, seed);
      const std::vector<double> s = saliency(ck.model, obs);
      const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
      const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double t = (s[i] - lo) / span;
        obs.colors[i] = {t, 0.2 * (1.0 - t), 1.0 - t};
      }
      write_ply(out, obs, {"saliency of " + cloud_file, "checkpoint " + ckpt, "seed " + std::to_string(seed)}, &s);
    } else if (*bench) {
      const LoadedCheckpoint ck = load_checkpoint(ckpt);
      const PointCloud obs = cloud_file.empty() ? synthetic_observation(ck.model.config, seed)
                                                : load_observation(cloud_file, ck.model.config, seed);
      SelectionConfig sc;
      std::vector<double> ms;
      for (int i = 0; i < runs + 1; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const GmmParams g = predict(ck.model, obs);
        const Pose p = select_pose(g, [](const Pose &) { return false; }, sc, derive_seed(seed, 0xbe, i));
        const double dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        (void)p;
        if (i > 0) // first run warms caches
          ms.push_back(dt);
      }
      double mean = 0.0;
      for (double v : ms)
        mean += v / static_cast<double>(ms.size());
      emit(out, {{"checkpoint", ckpt},
                 {"n_points", ck.model.config.n_points},
                 {"runs", runs},
                 {"seed", seed},
                 {"median_ms", percentile(ms, 0.5)},
                 {"p99_ms", percentile(ms, 0.99)},
                 {"mean_ms", mean},
                 {"min_ms", *std::min_element(ms.begin(), ms.end())},
                 {"max_ms", *std::max_element(ms.begin(), ms.end())}});
    } else if (*suite) {
      const SuiteConfig cfg = suite_config_from_json(read_config(config_file));
      const SuiteReport rep = run_suite(cfg, [](const std::string &s) { std::cerr << "[suite] " << s << "\n"; });
      write_suite(out, cfg, rep);
      std::cout << rep.summary;
    }
  } catch (const Error &e) {
    std::cerr << "error category=" << category_name(e.category()) << " message=" << one_line(e.what()) << "\n";
    return exit_code(e.category());
  } catch (const json::exception &e) {
    std::cerr << "error category=InvalidConfig message=" << one_line(e.what()) << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error category=IoFailure message=" << one_line(e.what()) << "\n";
    return 3;
  }
  return 0;
}
