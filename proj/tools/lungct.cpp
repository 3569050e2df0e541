// lungct: command-line front end for the lung-CT classification pipeline.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "lungct/augment.hpp"
#include "lungct/config.hpp"
#include "lungct/error.hpp"
#include "lungct/evaluation.hpp"
#include "lungct/experiment.hpp"
#include "lungct/preprocess.hpp"
#include "lungct/reporting.hpp"
#include "lungct/rng.hpp"
#include "lungct/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lungct;

namespace {

constexpr int kBenchmarkFailed = 5;
constexpr int kBenchmarkMaxEpochs = 20;

/// `--config` plus one `--<key>` flag per config key; flags beat the file.
struct ConfigFlags {
  fs::path config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "Config file (key: value lines)");
    for (const auto& key : config_keys()) {
      cmd.add_option("--" + key, overrides[key], "Override config key '" + key + "'");
    }
  }

  ExperimentConfig resolve(const CLI::App& cmd) const {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    for (const auto& [key, value] : overrides) {
      if (cmd.count("--" + key) > 0) set_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
  }
};

void print_report(const MetricsReport& r) {
  std::cout << fmt::format("backbone {}  accuracy {}%\n", r.backbone, format_percent(r.accuracy));
  std::cout << fmt::format("{:<8} {:>10} {:>10} {:>10} {:>8}\n", "class", "precision", "recall", "f1", "support");
  for (const auto& c : r.per_class) {
    std::cout << fmt::format("{:<8} {:>10} {:>10} {:>10} {:>8}\n", c.name, format_percent(c.precision),
                             format_percent(c.recall), format_percent(c.f1), c.support);
  }
  std::cout << fmt::format("{:<8} {:>10} {:>10} {:>10}\n", "macro", format_percent(r.macro.precision),
                           format_percent(r.macro.recall), format_percent(r.macro.f1));
  std::cout << fmt::format("{:<8} {:>10} {:>10} {:>10}\n", "weighted", format_percent(r.weighted.precision),
                           format_percent(r.weighted.recall), format_percent(r.weighted.f1));
  for (const auto& w : r.warnings) std::cout << "warning: " << w << '\n';
}

void print_comparison(const ComparisonTable& table) {
  std::cout << fmt::format("{:<14} {:>9} {:>10} {:>9} {:>9} {:>16}\n", "model", "accuracy", "precision", "recall",
                           "f1", "published acc.");
  for (const auto& row : table) {
    std::string published = "-";
    for (const auto& p : published_backbone_results()) {
      if (p.reference == row.model) published = fmt::format("{:.2f}", p.accuracy_percent);
    }
    std::cout << fmt::format("{:<14} {:>9} {:>10} {:>9} {:>9} {:>16}\n", row.model, format_percent(row.accuracy),
                             format_percent(row.precision), format_percent(row.recall), format_percent(row.f1),
                             published);
  }
  std::cout << "\nreference results (accuracy %):\n";
  for (const auto& p : published_prior_work()) {
    std::cout << fmt::format("  {:<11} {:<66} {:.2f}\n", p.reference, p.method, p.accuracy_percent);
  }
}

ComparisonTable compare_runs(const std::vector<fs::path>& runs, const fs::path& out_dir) {
  std::vector<MetricsReport> reports;
  for (const auto& run : runs) {
    MetricsReport r = read_metrics_json(RunArtifactSet::for_directory(run).metrics_json);
    r.run_id = run.filename().string();
    reports.push_back(std::move(r));
  }
  ComparisonTable table = compare_models(reports);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  export_comparison_csv(table, out_dir / "comparison.csv");
  plot_comparison(table, out_dir / "comparison.png");
  return table;
}

int cmd_synth(const fs::path& out, int per_class, std::uint64_t seed) {
  SyntheticDatasetOptions opts;
  opts.images_per_class = per_class;
  opts.seed = seed;
  const auto n = write_synthetic_dataset(out, opts);
  std::cout << fmt::format("wrote {} images under {}\n", n, out.string());
  return 0;
}

int cmd_ingest(const ExperimentConfig& cfg, const fs::path& manifest_out) {
  const DatasetManifest manifest = prepare_manifest(cfg);
  for (const auto& w : manifest.warnings) std::cout << "warning: " << w << '\n';
  std::cout << fmt::format("{:<8} {:>6} {:>6} {:>6} {:>6}\n", "class", "total", "train", "val", "test");
  const auto train = manifest.class_counts(Split::Train);
  const auto val = manifest.class_counts(Split::Val);
  const auto test = manifest.class_counts(Split::Test);
  for (ClassLabel c : kAllClasses) {
    const auto i = static_cast<std::size_t>(c);
    std::cout << fmt::format("{:<8} {:>6} {:>6} {:>6} {:>6}\n", class_name(c), manifest.class_counts()[i], train[i],
                             val[i], test[i]);
  }
  if (!manifest_out.empty()) {
    write_manifest_csv(manifest, manifest_out);
    std::cout << "manifest written to " << manifest_out.string() << '\n';
  }
  return 0;
}

int cmd_augment_preview(const ExperimentConfig& cfg, const fs::path& image, const fs::path& out, int count) {
  const Tensor299 original = to_tensor299(prepare_gray299(image));
  std::vector<ImageF> tiles{original.image()};
  for (int i = 0; i < count; ++i) {
    Rng rng = Rng::derive(cfg.seed, 0xa06, static_cast<std::uint64_t>(i));
    tiles.push_back(apply_policy(original, OneHot{}, cfg.augmentation, rng).first.image());
  }
  write_image_grid(tiles, 4, out);
  std::cout << fmt::format("wrote {} ({} augmented variants)\n", out.string(), count);
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& run_id) {
  const ExperimentOutcome outcome = run_experiment(cfg, run_id, &std::cout);
  print_report(outcome.report);
  std::cout << "run directory: " << outcome.artifacts.directory.string() << '\n';
  return 0;
}

int cmd_benchmark(ExperimentConfig cfg, const fs::path& weights_dir, double threshold) {
  if (cfg.train.max_epochs > kBenchmarkMaxEpochs) {
    throw Error(ErrorKind::InvalidValue,
                fmt::format("benchmark allows at most {} epochs (max_epochs={})", kBenchmarkMaxEpochs, cfg.train.max_epochs));
  }
  std::vector<fs::path> runs;
  for (Backbone b : {Backbone::DENSENET201, Backbone::INCEPTIONV3}) {
    cfg.backbone = b;
    if (!weights_dir.empty()) {
      std::string file(backbone_name(b));
      std::transform(file.begin(), file.end(), file.begin(), [](unsigned char ch) { return std::tolower(ch); });
      cfg.weights_path = weights_dir / (file + ".pt");
    }
    const std::string run_id = fmt::format("benchmark-{}-{}", backbone_name(b), cfg.seed);
    const ExperimentOutcome outcome = run_experiment(cfg, run_id, &std::cout);
    print_report(outcome.report);
    runs.push_back(outcome.artifacts.directory);
  }
  const ComparisonTable table = compare_runs(runs, cfg.output_dir);
  print_comparison(table);
  double dense = 0.0;
  double inception = 0.0;
  for (const auto& row : table) {
    if (row.model == "DENSENET201") dense = row.accuracy;
    if (row.model == "INCEPTIONV3") inception = row.accuracy;
  }
  const bool ok = dense >= threshold && dense >= inception;
  std::cout << fmt::format("{} full-scale benchmark: DENSENET201 {:.4f} (>= {:.2f} required), INCEPTIONV3 {:.4f}\n",
                           ok ? "PASS" : "FAIL", dense, threshold, inception);
  return ok ? 0 : kBenchmarkFailed;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lung-CT four-class classification pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate the procedural four-class toy dataset");
  fs::path synth_out;
  int synth_per_class = 50;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "Dataset root to create")->required();
  synth->add_option("--per-class", synth_per_class, "Images per class")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Generator seed");

  auto* ingest = app.add_subcommand("ingest", "Scan a dataset, split it, and print class counts");
  ConfigFlags ingest_flags;
  ingest_flags.attach(*ingest);
  fs::path manifest_out;
  ingest->add_option("--manifest", manifest_out, "Write the split manifest CSV here");

  auto* preview = app.add_subcommand("augment-preview", "Write a grid of augmented variants of one image");
  ConfigFlags preview_flags;
  preview_flags.attach(*preview);
  fs::path preview_image;
  fs::path preview_out = "augment_preview.png";
  int preview_count = 7;
  preview->add_option("--image", preview_image, "Source image")->required();
  preview->add_option("--out", preview_out, "Output PNG");
  preview->add_option("--count", preview_count, "Number of augmented variants")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train, evaluate and report one backbone");
  ConfigFlags train_flags;
  train_flags.attach(*train);
  std::string run_id;
  train->add_option("--run-id", run_id, "Run directory name (default <BACKBONE>-<UTC time>-<seed>)");

  auto* evaluate = app.add_subcommand("evaluate", "Re-evaluate a run's checkpoint on its test split");
  fs::path evaluate_run_dir;
  evaluate->add_option("--run", evaluate_run_dir, "Run directory")->required();

  auto* compare = app.add_subcommand("compare", "Compare finished runs (comparison.csv + comparison.png)");
  std::vector<fs::path> compare_dirs;
  fs::path compare_out;
  compare->add_option("runs", compare_dirs, "Run directories")->required();
  compare->add_option("--out", compare_out, "Output directory (default: parent of the first run)");

  auto* predict = app.add_subcommand("predict", "Classify one image with a trained run");
  fs::path predict_run;
  fs::path predict_image;
  predict->add_option("--run", predict_run, "Run directory")->required();
  predict->add_option("--image", predict_image, "Image to classify")->required();

  auto* report = app.add_subcommand("report", "Regenerate curves and print a run's metrics");
  fs::path report_run_dir;
  report->add_option("--run", report_run_dir, "Run directory")->required();

  auto* benchmark = app.add_subcommand(
      "benchmark", "Full-scale DenseNet201 vs InceptionV3 run on the real dataset (hours on CPU)");
  ConfigFlags benchmark_flags;
  benchmark_flags.attach(*benchmark);
  fs::path weights_dir;
  double threshold = 0.90;
  benchmark->add_option("--weights-dir", weights_dir, "Directory holding densenet201.pt and inceptionv3.pt");
  benchmark->add_option("--min-accuracy", threshold, "Required DenseNet201 test accuracy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::Usage);
  }

  try {
    if (*synth) return cmd_synth(synth_out, synth_per_class, synth_seed);
    if (*ingest) return cmd_ingest(ingest_flags.resolve(*ingest), manifest_out);
    if (*preview) return cmd_augment_preview(preview_flags.resolve(*preview), preview_image, preview_out, preview_count);
    if (*train) return cmd_train(train_flags.resolve(*train), run_id);
    if (*evaluate) {
      print_report(evaluate_run(evaluate_run_dir));
      return 0;
    }
    if (*compare) {
      const fs::path out = !compare_out.empty() ? compare_out
                           : compare_dirs.front().has_parent_path() ? compare_dirs.front().parent_path()
                                                                     : fs::path(".");
      print_comparison(compare_runs(compare_dirs, out));
      std::cout << "wrote " << (out / "comparison.csv").string() << " and " << (out / "comparison.png").string()
                << '\n';
      return 0;
    }
    if (*predict) {
      LoadedCheckpoint loaded = load_checkpoint(RunArtifactSet::for_directory(predict_run).checkpoint_dir);
      std::cout << format_prediction(predict_single(loaded.model, predict_image)) << '\n';
      return 0;
    }
    if (*report) {
      const MetricsReport r = report_run(report_run_dir);
      print_report(r);
      std::cout << "\npublished backbone accuracies (%):\n";
      for (const auto& p : published_backbone_results()) {
        std::cout << fmt::format("  {:<12} {:.2f}\n", p.reference, p.accuracy_percent);
      }
      return 0;
    }
    if (*benchmark) return cmd_benchmark(benchmark_flags.resolve(*benchmark), weights_dir, threshold);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const c10::Error& e) {
    std::cerr << "error: " << e.what_without_backtrace() << '\n';
    return exit_code(ErrorKind::NonFiniteLoss);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::Io);
  }
  return exit_code(ErrorKind::Usage);
}
