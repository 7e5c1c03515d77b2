// Command-line front end for the multiview AU detection pipeline.
//
// Subcommands mirror the run steps: synth, train-shape, extract, train,
// predict, evaluate, report. Every subcommand honours --dry-run (validate
// inputs, print the plan, write nothing) and --jobs N.

#include <CLI11.hpp>

#include "fera/driver.hpp"

namespace {

struct GlobalOpts {
  bool dry_run = false;
  int jobs = 1;
};

fera::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fera::FeraError("cannot open config file: " + path);
  fera::json j;
  try {
    in >> j;
  } catch (const fera::json::exception& e) {
    throw fera::FeraError("config " + path + " is not valid JSON: " + e.what());
  }
  return j;
}

fera::RunConfig make_run_config(const std::string& config_path, const GlobalOpts& g) {
  fera::json j = config_path.empty() ? fera::json::object() : load_json_file(config_path);
  fera::RunConfig c = fera::run_config_from_json(j);
  if (g.jobs >= 1) c.jobs = g.jobs;
  return c;
}

// Snapshot of the fully resolved configuration, written next to the outputs
// so a run can be reproduced from its artifacts alone.
void write_config_snapshot(const std::filesystem::path& out_dir, const std::string& step,
                           const fera::RunConfig& c) {
  fera::json j;
  j["step"] = step;
  j["window"] = {{"length", c.window.length}, {"stride", c.window.stride}};
  j["training_views"] = std::vector<int>(c.training_views.begin(), c.training_views.end());
  j["seed"] = c.seed;
  j["l2"] = c.l2;
  j["tol"] = c.tol;
  j["max_iter"] = c.max_iter;
  j["cfs_patience"] = c.cfs_patience;
  j["stable_points"] = c.stable_points;
  j["jobs"] = c.jobs;
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / (step + ".config.json"));
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiview facial action unit occurrence and intensity pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_flag("--dry-run", g.dry_run, "Validate inputs and print the plan without writing");
  app.add_option("--jobs", g.jobs, "Worker threads for per-AU training and per-sequence work")
      ->check(CLI::PositiveNumber);

  std::string manifest_path, config_path, shape_path, bundle_path, out_dir, pred_dir,
      partition = "development", scores_path, synth_cfg_path;
  int frame_step = 3;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic multiview landmark dataset");
  synth->add_option("--config", synth_cfg_path, "Generator config (JSON)");
  synth->add_option("--out", out_dir, "Output dataset directory")->required();

  auto* tshape = app.add_subcommand("train-shape", "Train the point-distribution shape model");
  tshape->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
  tshape->add_option("--out", shape_path, "Shape model output path")->required();
  tshape->add_option("--frame-step", frame_step, "Use every Nth tracked frame")
      ->check(CLI::PositiveNumber);

  auto* extract = app.add_subcommand("extract", "Write per-sequence geometric feature matrices");
  extract->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
  extract->add_option("--shape", shape_path, "Trained shape model")->required();
  extract->add_option("--config", config_path, "Run config (JSON)");
  extract->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train per-AU occurrence and intensity models");
  train->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
  train->add_option("--shape", shape_path, "Trained shape model")->required();
  train->add_option("--config", config_path, "Run config (JSON)");
  train->add_option("--out", bundle_path, "Model bundle output path")->required();

  auto* predict = app.add_subcommand("predict", "Predict per-frame labels for a partition");
  predict->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
  predict->add_option("--shape", shape_path, "Trained shape model")->required();
  predict->add_option("--model", bundle_path, "Trained model bundle")->required();
  predict->add_option("--config", config_path, "Run config (JSON)");
  predict->add_option("--partition", partition, "Partition to predict (train/development/test)");
  predict->add_option("--out", out_dir, "Prediction output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against labels");
  evaluate->add_option("--manifest", manifest_path, "Dataset manifest (JSON)")->required();
  evaluate->add_option("--predictions", pred_dir, "Directory of prediction CSVs")->required();
  evaluate->add_option("--partition", partition, "Partition to score");
  evaluate->add_option("--out", out_dir, "Scores output directory")->required();

  auto* report = app.add_subcommand("report", "Render score tables as Markdown and CSV");
  report->add_option("--scores", scores_path, "Scores JSON written by evaluate")->required();
  report->add_option("--out", out_dir, "Report output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      fera::json cfg =
          synth_cfg_path.empty() ? fera::json::object() : load_json_file(synth_cfg_path);
      fera::SynthConfig sc = fera::synth_config_from_json(cfg);  // validates
      if (g.dry_run) {
        std::printf("synth: %d/%d/%d subjects, %d task(s), %d frames, 9 views -> %s\n",
                    sc.n_train_subjects, sc.n_dev_subjects, sc.n_test_subjects, sc.n_tasks,
                    sc.profile.duration, out_dir.c_str());
        return 0;
      }
      auto manifest = fera::run_synth(cfg, out_dir);
      std::printf("wrote %s\n", manifest.string().c_str());
    } else if (tshape->parsed()) {
      auto manifest = fera::load_manifest(manifest_path);
      if (g.dry_run) {
        std::printf("train-shape: %zu train sequences, every %d frames -> %s\n",
                    manifest.partition("train").size(), frame_step, shape_path.c_str());
        return 0;
      }
      auto model = fera::run_train_shape(manifest, shape_path, frame_step);
      std::printf("wrote %s (%d components)\n", shape_path.c_str(),
                  static_cast<int>(model.basis.cols()));
    } else if (extract->parsed()) {
      auto manifest = fera::load_manifest(manifest_path);
      auto cfg = make_run_config(config_path, g);
      if (g.dry_run) {
        std::printf("extract: %zu sequences x %d features -> %s\n", manifest.entries.size(),
                    fera::kFeatureDim, out_dir.c_str());
        return 0;
      }
      auto shape = fera::load_shape_model(shape_path);
      fera::run_extract(manifest, shape, cfg, out_dir);
      write_config_snapshot(out_dir, "extract", cfg);
      std::printf("wrote %zu feature files to %s\n", manifest.entries.size(), out_dir.c_str());
    } else if (train->parsed()) {
      auto manifest = fera::load_manifest(manifest_path);
      auto cfg = make_run_config(config_path, g);
      auto entries = fera::select_training_views(manifest.partition("train"), cfg.training_views);
      if (g.dry_run) {
        std::printf("train: %zu sequences, views {", entries.size());
        for (int v : cfg.training_views) std::printf(" %d", v);
        std::printf(" }, seed %llu -> %s\n",
                    static_cast<unsigned long long>(cfg.seed), bundle_path.c_str());
        return 0;
      }
      auto shape = fera::load_shape_model(shape_path);
      fera::run_train(manifest, shape, cfg, bundle_path);
      write_config_snapshot(std::filesystem::path(bundle_path).parent_path(), "train", cfg);
      std::printf("wrote %s\n", bundle_path.c_str());
    } else if (predict->parsed()) {
      auto manifest = fera::load_manifest(manifest_path);
      auto cfg = make_run_config(config_path, g);
      auto entries = manifest.partition(partition);
      if (entries.empty()) throw fera::FeraError("predict: no entries in partition " + partition);
      if (g.dry_run) {
        std::printf("predict: %zu sequences in %s -> %s\n", entries.size(), partition.c_str(),
                    out_dir.c_str());
        return 0;
      }
      auto shape = fera::load_shape_model(shape_path);
      auto bundle = fera::load_bundle(bundle_path);
      fera::run_predict(manifest, entries, shape, bundle, cfg, out_dir);
      write_config_snapshot(out_dir, "predict", cfg);
      std::printf("wrote %zu prediction files to %s\n", entries.size(), out_dir.c_str());
    } else if (evaluate->parsed()) {
      auto manifest = fera::load_manifest(manifest_path);
      if (manifest.partition(partition).empty())
        throw fera::FeraError("evaluate: no entries in partition " + partition);
      if (g.dry_run) {
        std::printf("evaluate: %zu sequences in %s vs %s -> %s\n",
                    manifest.partition(partition).size(), partition.c_str(), pred_dir.c_str(),
                    out_dir.c_str());
        return 0;
      }
      fera::run_evaluate(manifest, partition, pred_dir, out_dir);
      std::printf("wrote %s/scores_%s.json\n", out_dir.c_str(), partition.c_str());
    } else if (report->parsed()) {
      if (g.dry_run) {
        load_json_file(scores_path);  // validates
        std::printf("report: %s -> %s\n", scores_path.c_str(), out_dir.c_str());
        return 0;
      }
      fera::run_report(scores_path, out_dir);
      std::printf("wrote report to %s\n", out_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
