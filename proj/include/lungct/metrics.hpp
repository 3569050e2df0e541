#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace lungct {

/// Rows are true classes, columns are predicted classes.
class ConfusionMatrix {
public:
  ConfusionMatrix() = default;
  ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names = {});

  std::size_t num_classes() const noexcept { return k_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }

  std::int64_t operator()(std::size_t truth, std::size_t predicted) const { return counts_[truth * k_ + predicted]; }
  std::int64_t& operator()(std::size_t truth, std::size_t predicted) { return counts_[truth * k_ + predicted]; }

  std::int64_t row_sum(std::size_t c) const;
  std::int64_t column_sum(std::size_t c) const;
  std::int64_t trace() const;
  std::int64_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
  std::size_t k_ = 0;
  std::vector<std::int64_t> counts_;
  std::vector<std::string> names_;
};

/// Throws LengthMismatch, LabelOutOfRange.
ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels, const std::vector<int>& predicted_labels,
                                 std::size_t num_classes, std::vector<std::string> class_names = {});

struct ClassMetrics {
  std::string name;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool undefined = false;  // some ratio was 0/0 and was reported as 0

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

/// One-vs-rest precision, recall and F1 per class; 0/0 is reported as 0.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm);

/// trace / total. Throws EmptyMatrix.
double accuracy(const ConfusionMatrix& cm);

struct MetricTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const MetricTriple&, const MetricTriple&) = default;
};

struct OverallMetrics {
  MetricTriple macro;
  MetricTriple weighted;
};

OverallMetrics overall_metrics(const std::vector<ClassMetrics>& per_class);

/// Pooled TP / FP / FN over classes.
MetricTriple micro_metrics(const ConfusionMatrix& cm);

struct MetricsReport {
  std::string backbone;
  std::string run_id;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  MetricTriple macro;
  MetricTriple weighted;
  ConfusionMatrix confusion;
  std::vector<std::string> warnings;
};

MetricsReport make_report(const ConfusionMatrix& cm, std::string backbone, std::string run_id = {});

/// metrics.json layout; run_id is deliberately left out so identical runs
/// serialize identically.
nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path);
MetricsReport read_metrics_json(const std::filesystem::path& path);

/// Header row and column carry the class names.
void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);

struct ComparisonRow {
  std::string model;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  friend bool operator==(const ComparisonRow&, const ComparisonRow&) = default;
};

using ComparisonTable = std::vector<ComparisonRow>;

/// Macro metrics per report, sorted by accuracy descending then by name.
/// Throws EmptyTable.
ComparisonTable compare_models(const std::vector<MetricsReport>& reports);

/// Percent with two decimals, rounding half up (0.98955 -> "98.96").
std::string format_percent(double fraction);
double round_percent(double fraction);

/// Published model accuracies and prior-work results, for side-by-side printing.
struct PublishedResult {
  std::string reference;
  std::string method;
  double accuracy_percent;
};
const std::vector<PublishedResult>& published_backbone_results();
const std::vector<PublishedResult>& published_prior_work();

} // namespace lungct
