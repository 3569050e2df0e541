#include "lungct/experiment.hpp"

#include <chrono>
#include <ctime>
#include <ostream>

#include <fmt/format.h>

#include "lungct/error.hpp"
#include "lungct/evaluation.hpp"

namespace lungct {

namespace fs = std::filesystem;

namespace {

void say(std::ostream* log, const std::string& line) {
  if (log != nullptr) *log << line << '\n' << std::flush;
}

std::uint64_t seed_of(const fs::path& run_dir) {
  const auto snapshot = run_dir / "config.snapshot";
  return fs::exists(snapshot) ? load_config(snapshot).seed : 0;
}

} // namespace

std::string default_run_id(const ExperimentConfig& cfg) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%dT%H%M%SZ", &utc);
  return fmt::format("{}-{}-{}", backbone_name(cfg.backbone), stamp, cfg.seed);
}

BackboneSpec backbone_spec(const ExperimentConfig& cfg) {
  BackboneSpec spec;
  spec.name = cfg.backbone;
  spec.scale = cfg.backbone_scale;
  spec.pretrained = cfg.pretrained;
  spec.unfreeze_fraction = cfg.unfreeze_fraction;
  spec.weights_path = cfg.weights_path;
  return spec;
}

HeadSpec head_spec(const ExperimentConfig& cfg) {
  HeadSpec spec;
  spec.dense_units = cfg.dense_units;
  spec.dropout_rate = cfg.dropout_rate;
  return spec;
}

FocalLossConfig focal_loss_config(const ExperimentConfig& cfg, const std::vector<std::size_t>& train_counts) {
  FocalLossConfig loss;
  loss.gamma = cfg.gamma;
  loss.alpha = resolve_alpha(cfg, train_counts);
  loss.validate();
  return loss;
}

DatasetManifest prepare_manifest(const ExperimentConfig& cfg) {
  DatasetManifest scanned = scan_dataset(cfg.dataset_root, cfg.seed);
  if (scanned.fully_split()) return scanned;
  return stratified_split(scanned, cfg.split, cfg.seed);
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::string run_id, std::ostream* log) {
  cfg.validate();
  if (run_id.empty()) run_id = default_run_id(cfg);
  const fs::path run_dir = cfg.output_dir / run_id;

  const DatasetManifest manifest = prepare_manifest(cfg);
  for (const auto& w : manifest.warnings) say(log, "warning: " + w);

  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw Error(ErrorKind::UnwritablePath, "cannot create run directory " + run_dir.string());
  ExperimentOutcome outcome;
  outcome.artifacts = RunArtifactSet::for_directory(run_dir);
  outcome.artifacts.run_id = run_id;
  const RunArtifactSet& art = outcome.artifacts;
  write_config_snapshot(cfg, art.config_snapshot);
  write_manifest_csv(manifest, art.manifest_csv);

  const LabeledSet train = load_split(manifest, Split::Train);
  const LabeledSet val = load_split(manifest, Split::Val);
  const LabeledSet test = load_split(manifest, Split::Test);
  say(log, fmt::format("run {}: {} train / {} val / {} test images", run_id, train.size(), val.size(), test.size()));

  const FocalLossConfig loss = focal_loss_config(cfg, train.class_counts());
  seed_backend(cfg.seed);
  const BackboneSpec backbone = backbone_spec(cfg);
  Classifier model = build_classifier(backbone, head_spec(cfg));
  say(log, fmt::format("{} ({}), {} of {} trunk layers trainable", backbone_name(backbone.name),
                       to_string(backbone.scale), model->trainable_layer_count(), model->extractor().layers().size()));

  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  outcome.training = train_model(model, train, val, cfg.augmentation, train_cfg, loss, [log](const EpochRow& r) {
    say(log, fmt::format("epoch {:>3}  loss {:.4f}  acc {:.4f}  val_loss {:.4f}  val_acc {:.4f}  lr {:g}", r.epoch,
                         r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.lr));
  });
  write_history_csv(outcome.training.history, art.history_csv);
  plot_history(outcome.training.history, art.curves_png);
  save_checkpoint(model, backbone, art.checkpoint_dir);

  outcome.report = evaluate_model(model, test, std::string(backbone_name(backbone.name)), run_id, train_cfg.batch_size);
  outcome.report.warnings = manifest.warnings;
  write_metrics_json(outcome.report, art.metrics_json);
  write_confusion_csv(outcome.report.confusion, art.confusion_csv);
  say(log, fmt::format("test accuracy {:.4f} (best epoch {})", outcome.report.accuracy, outcome.training.best_epoch));
  return outcome;
}

MetricsReport evaluate_run(const fs::path& run_dir) {
  const RunArtifactSet art = RunArtifactSet::for_directory(run_dir);
  if (!fs::exists(art.manifest_csv)) throw Error(ErrorKind::MissingFile, "no manifest.csv in " + run_dir.string());
  const DatasetManifest manifest = read_manifest_csv(art.manifest_csv, seed_of(run_dir));
  LoadedCheckpoint loaded = load_checkpoint(art.checkpoint_dir);
  const LabeledSet test = load_split(manifest, Split::Test);
  MetricsReport report = evaluate_model(loaded.model, test, std::string(backbone_name(loaded.backbone.name)),
                                        run_dir.filename().string());
  if (fs::exists(art.metrics_json)) report.warnings = read_metrics_json(art.metrics_json).warnings;
  write_metrics_json(report, art.metrics_json);
  write_confusion_csv(report.confusion, art.confusion_csv);
  return report;
}

MetricsReport report_run(const fs::path& run_dir) {
  const RunArtifactSet art = RunArtifactSet::for_directory(run_dir);
  if (!fs::exists(art.history_csv)) throw Error(ErrorKind::MissingFile, "no history.csv in " + run_dir.string());
  if (!fs::exists(art.metrics_json)) throw Error(ErrorKind::MissingFile, "no metrics.json in " + run_dir.string());
  plot_history(read_history_csv(art.history_csv), art.curves_png);
  MetricsReport report = read_metrics_json(art.metrics_json);
  report.run_id = run_dir.filename().string();
  return report;
}

} // namespace lungct
