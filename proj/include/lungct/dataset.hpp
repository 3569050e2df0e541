#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lungct {

inline constexpr int kNumClasses = 4;

/// Class index mapping is fixed: ADC 0, LCC 1, NORMAL 2, SCC 3.
enum class ClassLabel : int { ADC = 0, LCC = 1, NORMAL = 2, SCC = 3 };

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::ADC, ClassLabel::LCC, ClassLabel::NORMAL, ClassLabel::SCC};

/// Per-class image counts of the published dataset snapshot (1,185 images).
inline constexpr std::array<std::size_t, kNumClasses> kPublishedClassCounts = {534, 166, 240, 245};

constexpr int index_of(ClassLabel label) noexcept { return static_cast<int>(label); }

/// Throws IndexOutOfRange outside [0, 4).
ClassLabel label_from_index(int index);

/// Short name: "ADC", "LCC", "NORMAL", "SCC".
std::string_view class_name(ClassLabel label);

/// Folder name as shipped by the public dataset, e.g. "large.cell.carcinoma".
std::string_view canonical_dir_name(ClassLabel label);

/// Case-insensitive keyword match on a class folder name. Long folder names
/// such as "adenocarcinoma_left.lower.lobe_T2_N0_M0_Ib" are accepted, as are
/// the bare abbreviations. Throws UnknownClassName.
ClassLabel encode_label(std::string_view dir_name);

std::optional<ClassLabel> try_encode_label(std::string_view dir_name);

std::vector<float> one_hot(ClassLabel label, int num_classes);

enum class Split { Train, Val, Test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view text);

struct ImageRecord {
  std::filesystem::path path;
  ClassLabel label = ClassLabel::ADC;
  std::optional<Split> split;  // unset until assigned
  std::string source_dir_name;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct SplitRatios {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;

  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

class DatasetManifest {
public:
  DatasetManifest() = default;
  /// Sorts records by path and recomputes class counts.
  DatasetManifest(std::vector<ImageRecord> records, std::uint64_t seed);

  const std::vector<ImageRecord>& records() const noexcept { return records_; }
  const std::array<std::size_t, kNumClasses>& class_counts() const noexcept { return class_counts_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t size() const noexcept { return records_.size(); }

  bool fully_split() const;
  std::vector<ImageRecord> in_split(Split split) const;
  std::array<std::size_t, kNumClasses> class_counts(Split split) const;

  /// Human-readable notes gathered while scanning (skipped files, count drift).
  std::vector<std::string> warnings;

private:
  std::vector<ImageRecord> records_;
  std::array<std::size_t, kNumClasses> class_counts_{};
  std::uint64_t seed_ = 42;
};

/// Walks `<root>/[{train|valid|test}/]<class_dir>/<image>`. Shipped split
/// folders are honored; otherwise records are left unassigned.
DatasetManifest scan_dataset(const std::filesystem::path& root, std::uint64_t seed);

/// Per-class shuffle (seeded) then floor allocation of val/test; the rounding
/// remainder goes to train.
DatasetManifest stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios,
                                 std::uint64_t seed);

/// Split sizes for one class of `n` images.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

/// Warnings when counts differ from the published snapshot.
std::vector<std::string> compare_with_published_counts(const std::array<std::size_t, kNumClasses>& counts);

bool is_image_extension(const std::filesystem::path& path);

/// CSV `path,label_index,split`, one record per line after the header.
void write_manifest_csv(const DatasetManifest& manifest, std::ostream& out);
void write_manifest_csv(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest_csv(const std::filesystem::path& path, std::uint64_t seed);

} // namespace lungct
