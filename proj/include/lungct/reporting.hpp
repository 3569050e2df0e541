#pragma once

#include <filesystem>
#include <string>

#include "lungct/callbacks.hpp"
#include "lungct/image.hpp"
#include "lungct/metrics.hpp"

namespace lungct {

inline constexpr int kPlotWidth = 1200;
inline constexpr int kPlotHeight = 800;

/// Accuracy and loss curves (train and validation) per epoch, as PNG.
/// Throws EmptyHistory, UnwritablePath.
void plot_history(const EpochHistory& history, const std::filesystem::path& out);

/// Grouped bars of accuracy / precision / recall / F1 per model, as PNG.
/// Throws EmptyTable, UnwritablePath.
void plot_comparison(const ComparisonTable& table, const std::filesystem::path& out);

/// `model,accuracy,precision,recall,f1` in percent with two decimals.
void export_comparison_csv(const ComparisonTable& table, const std::filesystem::path& out);
/// Values come back as fractions.
ComparisonTable parse_comparison_csv(const std::filesystem::path& in);

/// Files produced for one run directory `runs/<run-id>/`.
/// Tiles [0,1] images (first channel shown as gray) into a grid PNG with
/// `columns` tiles per row and a 4 px white gutter. Throws UnwritablePath.
void write_image_grid(const std::vector<ImageF>& tiles, int columns, const std::filesystem::path& out);

struct RunArtifactSet {
  std::string run_id;
  std::filesystem::path directory;
  std::filesystem::path history_csv;
  std::filesystem::path metrics_json;
  std::filesystem::path confusion_csv;
  std::filesystem::path curves_png;
  std::filesystem::path config_snapshot;
  std::filesystem::path manifest_csv;
  std::filesystem::path checkpoint_dir;

  static RunArtifactSet for_directory(const std::filesystem::path& run_dir);

  /// Paths that are expected but missing.
  std::vector<std::filesystem::path> missing() const;
};

} // namespace lungct
