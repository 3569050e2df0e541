#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lungct/augment.hpp"
#include "lungct/backbone.hpp"
#include "lungct/callbacks.hpp"
#include "lungct/dataset.hpp"

namespace lungct {

/// Every knob of one experiment. Keys of the flat `key: value` config file
/// map one-to-one onto these fields (see `config_keys()`).
struct ExperimentConfig {
  std::filesystem::path dataset_root = "data";
  Backbone backbone = Backbone::DENSENET201;
  BackboneScale backbone_scale = BackboneScale::Full;
  SplitRatios split;
  std::uint64_t seed = 42;
  TrainConfig train;
  double gamma = 2.0;
  /// "inverse_frequency", "uniform", or four comma-separated weights.
  std::string alpha_mode = "inverse_frequency";
  AugmentationPolicy augmentation;
  double unfreeze_fraction = 0.1;
  std::vector<int> dense_units = {256};
  double dropout_rate = 0.3;
  bool pretrained = true;
  std::filesystem::path weights_path;
  std::filesystem::path output_dir = "runs";

  /// Cross-field checks; throws InvalidValue naming the key.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// All accepted keys in snapshot order.
const std::vector<std::string>& config_keys();

/// Applies one `key = value` assignment. Throws UnknownKey / InvalidValue.
void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);

/// Parses `key: value` lines (`#` starts a comment). Unset keys keep their
/// defaults. Throws MissingFile, UnknownKey, InvalidValue.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(std::istream& in, const std::string& source_name = "<config>");

/// Every effective value, one `key: value` per line; parse_config of the
/// output reproduces `cfg`.
void write_config_snapshot(const ExperimentConfig& cfg, std::ostream& out);
void write_config_snapshot(const ExperimentConfig& cfg, const std::filesystem::path& path);

/// Resolves alpha_mode against training-split class counts.
std::vector<double> resolve_alpha(const ExperimentConfig& cfg, const std::vector<std::size_t>& train_counts);

} // namespace lungct
