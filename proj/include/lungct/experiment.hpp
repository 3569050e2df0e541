#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "lungct/config.hpp"
#include "lungct/metrics.hpp"
#include "lungct/model_zoo.hpp"
#include "lungct/reporting.hpp"
#include "lungct/training.hpp"

namespace lungct {

/// `<BACKBONE>-<UTC yyyymmddThhmmssZ>-<seed>`.
std::string default_run_id(const ExperimentConfig& cfg);

BackboneSpec backbone_spec(const ExperimentConfig& cfg);
HeadSpec head_spec(const ExperimentConfig& cfg);
FocalLossConfig focal_loss_config(const ExperimentConfig& cfg, const std::vector<std::size_t>& train_counts);

/// scan_dataset + stratified_split (unless the dataset ships its own split).
DatasetManifest prepare_manifest(const ExperimentConfig& cfg);

struct ExperimentOutcome {
  RunArtifactSet artifacts;
  TrainResult training;
  MetricsReport report;
};

/// ingest -> preprocess -> train (augmented) -> evaluate -> report, writing
/// every artifact under `<output_dir>/<run_id>/`. Progress lines go to `log`
/// when non-null. Propagates module errors.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::string run_id = {}, std::ostream* log = nullptr);

/// Re-evaluates a finished run's checkpoint on its recorded TEST split and
/// rewrites metrics.json and confusion_matrix.csv.
MetricsReport evaluate_run(const std::filesystem::path& run_dir);

/// Regenerates curves.png from history.csv and returns the stored report.
MetricsReport report_run(const std::filesystem::path& run_dir);

} // namespace lungct
