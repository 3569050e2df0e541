#include "lungct/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "lungct/error.hpp"
#include "lungct/preprocess.hpp"
#include "lungct/rng.hpp"

namespace lungct {

namespace fs = std::filesystem;

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool contains(const std::string& haystack, std::string_view needle) {
  return haystack.find(needle) != std::string::npos;
}

struct SplitDir {
  std::string_view name;
  Split split;
};

constexpr SplitDir kSplitDirs[] = {{"train", Split::Train}, {"valid", Split::Val}, {"test", Split::Test}};

std::vector<fs::path> sorted_children(const fs::path& dir, bool directories) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool decodable(const fs::path& path) {
  try {
    const auto image = decode_image(path);
    return !image.empty();
  } catch (const Error&) {
    return false;
  }
}

} // namespace

ClassLabel label_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw Error(ErrorKind::IndexOutOfRange, "class index " + std::to_string(index) + " outside [0,4)");
  }
  return static_cast<ClassLabel>(index);
}

std::string_view class_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::ADC: return "ADC";
    case ClassLabel::LCC: return "LCC";
    case ClassLabel::NORMAL: return "NORMAL";
    case ClassLabel::SCC: return "SCC";
  }
  return "?";
}

std::string_view canonical_dir_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::ADC: return "adenocarcinoma";
    case ClassLabel::LCC: return "large.cell.carcinoma";
    case ClassLabel::NORMAL: return "normal";
    case ClassLabel::SCC: return "squamous.cell.carcinoma";
  }
  return "?";
}

std::optional<ClassLabel> try_encode_label(std::string_view dir_name) {
  const std::string name = lower(dir_name);
  if (name.empty()) return std::nullopt;
  if (contains(name, "adenocarcinoma") || name == "adc") return ClassLabel::ADC;
  if (contains(name, "large.cell") || contains(name, "large_cell") || contains(name, "large cell") || name == "lcc") {
    return ClassLabel::LCC;
  }
  if (contains(name, "normal")) return ClassLabel::NORMAL;
  if (contains(name, "squamous") || name == "scc") return ClassLabel::SCC;
  return std::nullopt;
}

ClassLabel encode_label(std::string_view dir_name) {
  if (dir_name.empty()) throw Error(ErrorKind::UnknownClassName, "empty class folder name");
  if (auto label = try_encode_label(dir_name)) return *label;
  throw Error(ErrorKind::UnknownClassName, "no class keyword in '" + std::string(dir_name) + "'");
}

std::vector<float> one_hot(ClassLabel label, int num_classes) {
  const int index = index_of(label);
  if (num_classes <= 0 || index >= num_classes) {
    throw Error(ErrorKind::IndexOutOfRange,
                "label index " + std::to_string(index) + " does not fit " + std::to_string(num_classes) + " classes");
  }
  std::vector<float> out(static_cast<std::size_t>(num_classes), 0.0F);
  out[static_cast<std::size_t>(index)] = 1.0F;
  return out;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  const std::string t = lower(text);
  if (t == "train") return Split::Train;
  if (t == "val" || t == "valid") return Split::Val;
  if (t == "test") return Split::Test;
  return std::nullopt;
}

DatasetManifest::DatasetManifest(std::vector<ImageRecord> records, std::uint64_t seed)
    : records_(std::move(records)), seed_(seed) {
  std::stable_sort(records_.begin(), records_.end(),
                   [](const ImageRecord& a, const ImageRecord& b) { return a.path < b.path; });
  for (const auto& r : records_) ++class_counts_[static_cast<std::size_t>(index_of(r.label))];
}

bool DatasetManifest::fully_split() const {
  return !records_.empty() &&
         std::all_of(records_.begin(), records_.end(), [](const ImageRecord& r) { return r.split.has_value(); });
}

std::vector<ImageRecord> DatasetManifest::in_split(Split split) const {
  std::vector<ImageRecord> out;
  for (const auto& r : records_) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

std::array<std::size_t, kNumClasses> DatasetManifest::class_counts(Split split) const {
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& r : records_) {
    if (r.split == split) ++counts[static_cast<std::size_t>(index_of(r.label))];
  }
  return counts;
}

bool is_image_extension(const fs::path& path) {
  const std::string ext = lower(path.extension().string());
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> compare_with_published_counts(const std::array<std::size_t, kNumClasses>& counts) {
  std::vector<std::string> out;
  for (ClassLabel c : kAllClasses) {
    const auto i = static_cast<std::size_t>(index_of(c));
    if (counts[i] != kPublishedClassCounts[i]) {
      out.push_back(std::string(class_name(c)) + ": found " + std::to_string(counts[i]) + " images, published count is " +
                    std::to_string(kPublishedClassCounts[i]));
    }
  }
  return out;
}

DatasetManifest scan_dataset(const fs::path& root, std::uint64_t seed) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorKind::MissingRoot, "dataset root not found: " + root.string());

  // (directory, split) pairs to scan for class folders.
  std::vector<std::pair<fs::path, std::optional<Split>>> containers;
  std::map<std::string, fs::path> by_name;
  for (const auto& dir : sorted_children(root, true)) by_name.emplace(lower(dir.filename().string()), dir);
  for (const auto& sd : kSplitDirs) {
    if (auto it = by_name.find(std::string(sd.name)); it != by_name.end()) containers.emplace_back(it->second, sd.split);
  }
  if (containers.empty()) containers.emplace_back(root, std::nullopt);

  std::vector<std::string> warnings;
  std::vector<ImageRecord> records;
  bool found_class = false;
  for (const auto& [container, split] : containers) {
    for (const auto& class_dir : sorted_children(container, true)) {
      const std::string dir_name = class_dir.filename().string();
      const auto label = try_encode_label(dir_name);
      if (!label) {
        warnings.push_back("ignoring unrecognized folder " + class_dir.string());
        continue;
      }
      found_class = true;
      std::size_t kept = 0;
      for (const auto& file : sorted_children(class_dir, false)) {
        if (!is_image_extension(file)) continue;
        if (!decodable(file)) {
          warnings.push_back("skipping undecodable image " + file.string());
          continue;
        }
        records.push_back({file, *label, split, dir_name});
        ++kept;
      }
      if (kept == 0) throw Error(ErrorKind::EmptyClass, "no decodable images in " + class_dir.string());
    }
  }
  if (!found_class) {
    throw Error(ErrorKind::NoRecognizableClassFolder, "no class folder found under " + root.string());
  }

  DatasetManifest manifest(std::move(records), seed);
  for (auto& w : compare_with_published_counts(manifest.class_counts())) warnings.push_back(std::move(w));
  manifest.warnings = std::move(warnings);
  return manifest;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
  constexpr double kSlack = 1e-9;
  const double exact_val = static_cast<double>(n) * ratios.val;
  const double exact_test = static_cast<double>(n) * ratios.test;
  auto n_val = static_cast<std::size_t>(std::floor(exact_val + kSlack));
  auto n_test = static_cast<std::size_t>(std::floor(exact_test + kSlack));
  // Train absorbs the remainder unless that would push it more than one
  // image past its exact share; then the larger fractional part gets it.
  const double train_excess = static_cast<double>(n - n_val - n_test) - static_cast<double>(n) * ratios.train;
  if (train_excess > 1.0 + kSlack) {
    if (exact_val - static_cast<double>(n_val) >= exact_test - static_cast<double>(n_test)) {
      ++n_val;
    } else {
      ++n_test;
    }
  }
  return {n - n_val - n_test, n_val, n_test};
}

DatasetManifest stratified_split(const DatasetManifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::InvalidRatios, "split ratios must be positive and sum to 1");
  }
  std::vector<ImageRecord> records = manifest.records();
  for (ClassLabel c : kAllClasses) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].label == c) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < 3) {
      throw Error(ErrorKind::ClassTooSmall, std::string(class_name(c)) + " has fewer than 3 images");
    }
    Rng rng = Rng::derive(seed, 0x5b1u, static_cast<std::uint64_t>(index_of(c)));
    rng.shuffle(std::span<std::size_t>(members));
    const auto counts = split_counts(members.size(), ratios);
    for (std::size_t k = 0; k < members.size(); ++k) {
      records[members[k]].split = k < counts[0] ? Split::Train : (k < counts[0] + counts[1] ? Split::Val : Split::Test);
    }
  }
  DatasetManifest out(std::move(records), seed);
  out.warnings = manifest.warnings;
  return out;
}

void write_manifest_csv(const DatasetManifest& manifest, std::ostream& out) {
  out << "path,label_index,split\n";
  for (const auto& r : manifest.records()) {
    out << r.path.generic_string() << ',' << index_of(r.label) << ','
        << (r.split ? to_string(*r.split) : std::string_view("unassigned")) << '\n';
  }
}

void write_manifest_csv(const DatasetManifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
  write_manifest_csv(manifest, out);
}

DatasetManifest read_manifest_csv(const fs::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot read manifest " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<ImageRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto second = line.rfind(',');
    const auto first = second == std::string::npos ? std::string::npos : line.rfind(',', second - 1);
    if (first == std::string::npos) throw Error(ErrorKind::InvalidValue, "malformed manifest line: " + line);
    ImageRecord r;
    r.path = line.substr(0, first);
    r.label = label_from_index(std::stoi(line.substr(first + 1, second - first - 1)));
    r.split = parse_split(line.substr(second + 1));
    r.source_dir_name = r.path.parent_path().filename().string();
    records.push_back(std::move(r));
  }
  return DatasetManifest(std::move(records), seed);
}

} // namespace lungct
