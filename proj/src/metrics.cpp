#include "lungct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "lungct/error.hpp"

namespace lungct {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes, std::vector<std::string> class_names)
    : k_(num_classes), counts_(num_classes * num_classes, 0), names_(std::move(class_names)) {
  if (names_.empty()) {
    for (std::size_t i = 0; i < k_; ++i) names_.push_back(std::to_string(i));
  }
  if (names_.size() != k_) throw Error(ErrorKind::ShapeMismatch, "class name count does not match class count");
}

std::int64_t ConfusionMatrix::row_sum(std::size_t c) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j < k_; ++j) s += (*this)(c, j);
  return s;
}

std::int64_t ConfusionMatrix::column_sum(std::size_t c) const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, c);
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, i);
  return s;
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

ConfusionMatrix confusion_matrix(const std::vector<int>& true_labels, const std::vector<int>& predicted_labels,
                                 std::size_t num_classes, std::vector<std::string> class_names) {
  if (true_labels.size() != predicted_labels.size()) {
    throw Error(ErrorKind::LengthMismatch, fmt::format("{} true labels vs {} predictions", true_labels.size(),
                                                       predicted_labels.size()));
  }
  ConfusionMatrix cm(num_classes, std::move(class_names));
  const auto k = static_cast<int>(num_classes);
  for (std::size_t n = 0; n < true_labels.size(); ++n) {
    const int t = true_labels[n];
    const int p = predicted_labels[n];
    if (t < 0 || t >= k || p < 0 || p >= k) {
      throw Error(ErrorKind::LabelOutOfRange, fmt::format("pair {} = ({}, {}) outside [0, {})", n, t, p, k));
    }
    ++cm(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
  }
  return cm;
}

namespace {

double ratio(std::int64_t num, std::int64_t den, bool& undefined) {
  if (den == 0) {
    undefined = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

} // namespace

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm) {
  std::vector<ClassMetrics> out;
  out.reserve(cm.num_classes());
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const std::int64_t tp = cm(c, c);
    const std::int64_t fp = cm.column_sum(c) - tp;
    const std::int64_t fn = cm.row_sum(c) - tp;
    ClassMetrics m;
    m.name = cm.class_names()[c];
    m.precision = ratio(tp, tp + fp, m.undefined);
    m.recall = ratio(tp, tp + fn, m.undefined);
    m.f1 = harmonic(m.precision, m.recall);
    m.support = tp + fn;
    out.push_back(std::move(m));
  }
  return out;
}

double accuracy(const ConfusionMatrix& cm) {
  const auto total = cm.total();
  if (total == 0) throw Error(ErrorKind::EmptyMatrix, "accuracy of an empty confusion matrix");
  return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

OverallMetrics overall_metrics(const std::vector<ClassMetrics>& per_class) {
  OverallMetrics out;
  if (per_class.empty()) return out;
  std::int64_t total_support = 0;
  for (const auto& m : per_class) {
    out.macro.precision += m.precision;
    out.macro.recall += m.recall;
    out.macro.f1 += m.f1;
    const auto w = static_cast<double>(m.support);
    out.weighted.precision += w * m.precision;
    out.weighted.recall += w * m.recall;
    out.weighted.f1 += w * m.f1;
    total_support += m.support;
  }
  const auto n = static_cast<double>(per_class.size());
  out.macro = {out.macro.precision / n, out.macro.recall / n, out.macro.f1 / n};
  if (total_support > 0) {
    const auto s = static_cast<double>(total_support);
    out.weighted = {out.weighted.precision / s, out.weighted.recall / s, out.weighted.f1 / s};
  } else {
    out.weighted = {};
  }
  return out;
}

MetricTriple micro_metrics(const ConfusionMatrix& cm) {
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    tp += cm(c, c);
    fp += cm.column_sum(c) - cm(c, c);
    fn += cm.row_sum(c) - cm(c, c);
  }
  bool undefined = false;
  MetricTriple m{ratio(tp, tp + fp, undefined), ratio(tp, tp + fn, undefined), 0.0};
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

MetricsReport make_report(const ConfusionMatrix& cm, std::string backbone, std::string run_id) {
  MetricsReport report;
  report.backbone = std::move(backbone);
  report.run_id = std::move(run_id);
  report.accuracy = accuracy(cm);
  report.per_class = per_class_metrics(cm);
  const auto overall = overall_metrics(report.per_class);
  report.macro = overall.macro;
  report.weighted = overall.weighted;
  report.confusion = cm;
  for (const auto& m : report.per_class) {
    if (m.undefined) report.warnings.push_back("class " + m.name + " has an undefined (0/0) metric reported as 0");
  }
  return report;
}

namespace {

nlohmann::json triple_json(const MetricTriple& t) {
  return {{"precision", t.precision}, {"recall", t.recall}, {"f1", t.f1}};
}

MetricTriple triple_from(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

} // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    per_class.push_back(
        {{"class", m.name}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}});
  }
  nlohmann::json counts = nlohmann::json::array();
  for (std::size_t i = 0; i < report.confusion.num_classes(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < report.confusion.num_classes(); ++j) row.push_back(report.confusion(i, j));
    counts.push_back(std::move(row));
  }
  return {{"backbone", report.backbone},
          {"accuracy", report.accuracy},
          {"per_class", per_class},
          {"macro", triple_json(report.macro)},
          {"weighted", triple_json(report.weighted)},
          {"confusion_matrix", counts},
          {"warnings", report.warnings}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    MetricsReport r;
    r.backbone = j.at("backbone").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    std::vector<std::string> names;
    for (const auto& m : j.at("per_class")) {
      ClassMetrics cm;
      cm.name = m.at("class").get<std::string>();
      cm.precision = m.at("precision").get<double>();
      cm.recall = m.at("recall").get<double>();
      cm.f1 = m.at("f1").get<double>();
      cm.support = m.at("support").get<std::int64_t>();
      names.push_back(cm.name);
      r.per_class.push_back(std::move(cm));
    }
    r.macro = triple_from(j.at("macro"));
    r.weighted = triple_from(j.at("weighted"));
    if (j.contains("confusion_matrix")) {
      const auto& rows = j.at("confusion_matrix");
      r.confusion = ConfusionMatrix(rows.size(), names.size() == rows.size() ? names : std::vector<std::string>{});
      for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k < rows[i].size(); ++k) r.confusion(i, k) = rows[i][k].get<std::int64_t>();
      }
    }
    if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidValue, std::string("malformed metrics report: ") + e.what());
  }
}

void write_metrics_json(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

MetricsReport read_metrics_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidValue, path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
  out << "true\\predicted";
  for (const auto& name : cm.class_names()) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    out << cm.class_names()[i];
    for (std::size_t j = 0; j < cm.num_classes(); ++j) out << ',' << cm(i, j);
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

ComparisonTable compare_models(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw Error(ErrorKind::EmptyTable, "no reports to compare");
  ComparisonTable table;
  for (const auto& r : reports) {
    table.push_back({r.backbone, r.accuracy, r.macro.precision, r.macro.recall, r.macro.f1});
  }
  std::stable_sort(table.begin(), table.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
    if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
    return a.model < b.model;
  });
  return table;
}

double round_percent(double fraction) {
  // Half-up on the hundredths of a percent; the slack absorbs binary
  // representation error such as 0.98955 * 100 = 98.95499999...
  return std::floor(fraction * 10000.0 + 0.5 + 1e-7) / 100.0;
}

std::string format_percent(double fraction) { return fmt::format("{:.2f}", round_percent(fraction)); }

const std::vector<PublishedResult>& published_backbone_results() {
  static const std::vector<PublishedResult> results = {
      {"DENSENET201", "DenseNet201 + focal loss", 98.95},
      {"INCEPTIONV3", "InceptionV3 + focal loss", 95.57},
      {"VGG16", "VGG16 + focal loss", 63.08},
      {"VGG19", "VGG19 + focal loss", 23.42},
  };
  return results;
}

const std::vector<PublishedResult>& published_prior_work() {
  static const std::vector<PublishedResult> results = {
      {"prior work", "VGG19 + EfficientNetB0 + ResNet101", 91.0},
      {"prior work", "EfficientNet B3", 96.0},
      {"prior work", "Dual-state transfer learning, DCNN, VGG16, InceptionV3, ResNet50", 92.57},
      {"published", "DenseNet201 + focal loss", 98.95},
  };
  return results;
}

} // namespace lungct
