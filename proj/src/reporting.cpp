#include "lungct/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lungct/error.hpp"

namespace lungct {

namespace fs = std::filesystem;

namespace {

const cv::Scalar kWhite(255, 255, 255);
const cv::Scalar kBlack(0, 0, 0);
const cv::Scalar kGrid(225, 225, 225);
// BGR
const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}};

constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.5, int thickness = 1,
          const cv::Scalar& color = kBlack) {
  cv::putText(img, s, at, kFont, scale, color, thickness, cv::LINE_AA);
}

void text_centered(cv::Mat& img, const std::string& s, cv::Point center, double scale = 0.5, int thickness = 1) {
  int baseline = 0;
  const auto size = cv::getTextSize(s, kFont, scale, thickness, &baseline);
  text(img, s, {center.x - size.width / 2, center.y + size.height / 2}, scale, thickness);
}

struct Axes {
  cv::Rect area;
  double x_min, x_max, y_min, y_max;

  cv::Point map(double x, double y) const {
    const double fx = x_max > x_min ? (x - x_min) / (x_max - x_min) : 0.5;
    const double fy = y_max > y_min ? (y - y_min) / (y_max - y_min) : 0.5;
    return {area.x + static_cast<int>(std::lround(fx * area.width)),
            area.y + area.height - static_cast<int>(std::lround(fy * area.height))};
  }
};

void draw_axes(cv::Mat& img, const Axes& ax, const std::string& title, const std::string& x_label, int x_ticks,
               bool integer_x) {
  constexpr int kYTicks = 5;
  for (int i = 0; i <= kYTicks; ++i) {
    const double v = ax.y_min + (ax.y_max - ax.y_min) * i / kYTicks;
    const cv::Point p = ax.map(ax.x_min, v);
    cv::line(img, {ax.area.x, p.y}, {ax.area.x + ax.area.width, p.y}, kGrid, 1);
    text(img, fmt::format("{:.2f}", v), {ax.area.x - 55, p.y + 5}, 0.45);
  }
  for (int i = 0; i <= x_ticks; ++i) {
    const double v = ax.x_min + (ax.x_max - ax.x_min) * i / std::max(x_ticks, 1);
    const cv::Point p = ax.map(v, ax.y_min);
    cv::line(img, {p.x, p.y}, {p.x, p.y + 6}, kBlack, 1);
    text_centered(img, integer_x ? fmt::format("{}", std::lround(v)) : fmt::format("{:.2f}", v), {p.x, p.y + 20}, 0.45);
  }
  cv::rectangle(img, ax.area, kBlack, 1);
  text_centered(img, title, {ax.area.x + ax.area.width / 2, ax.area.y - 22}, 0.7, 2);
  text_centered(img, x_label, {ax.area.x + ax.area.width / 2, ax.area.y + ax.area.height + 45}, 0.55);
}

void draw_series(cv::Mat& img, const Axes& ax, const std::vector<double>& xs, const std::vector<double>& ys,
                 const cv::Scalar& color) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const cv::Point p = ax.map(xs[i], ys[i]);
    if (i > 0) cv::line(img, ax.map(xs[i - 1], ys[i - 1]), p, color, 2, cv::LINE_AA);
    cv::circle(img, p, 4, color, cv::FILLED, cv::LINE_AA);
  }
}

void draw_legend(cv::Mat& img, cv::Point origin, const std::vector<std::pair<std::string, cv::Scalar>>& entries) {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const cv::Point p{origin.x, origin.y + static_cast<int>(i) * 22};
    cv::rectangle(img, cv::Rect(p.x, p.y - 10, 18, 12), entries[i].second, cv::FILLED);
    text(img, entries[i].first, {p.x + 26, p.y}, 0.5);
  }
}

void require_writable(const fs::path& out) {
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  std::error_code ec;
  if (!fs::is_directory(parent, ec)) throw Error(ErrorKind::UnwritablePath, "directory does not exist: " + parent.string());
}

void save_png(const cv::Mat& img, const fs::path& out) {
  require_writable(out);
  bool ok = false;
  try {
    ok = cv::imwrite(out.string(), img);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::UnwritablePath, out.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorKind::UnwritablePath, "cannot write " + out.string());
}

} // namespace

void plot_history(const EpochHistory& history, const fs::path& out) {
  if (history.empty()) throw Error(ErrorKind::EmptyHistory, "nothing to plot");
  cv::Mat img(kPlotHeight, kPlotWidth, CV_8UC3, kWhite);

  std::vector<double> epochs, train_acc, val_acc, train_loss, val_loss;
  for (const auto& r : history.rows()) {
    epochs.push_back(r.epoch);
    train_acc.push_back(r.train_accuracy);
    val_acc.push_back(r.val_accuracy);
    train_loss.push_back(r.train_loss);
    val_loss.push_back(r.val_loss);
  }
  const double x_min = epochs.front();
  const double x_max = std::max(epochs.back(), x_min + 1.0);
  const int x_ticks = static_cast<int>(std::min(10.0, x_max - x_min));

  const Axes acc{cv::Rect(90, 90, 460, 560), x_min, x_max, 0.0, 1.0};
  draw_axes(img, acc, "Accuracy", "epoch", x_ticks, true);
  draw_series(img, acc, epochs, train_acc, kPalette[0]);
  draw_series(img, acc, epochs, val_acc, kPalette[1]);

  double loss_max = 0.0;
  for (double v : train_loss) loss_max = std::max(loss_max, std::isfinite(v) ? v : 0.0);
  for (double v : val_loss) loss_max = std::max(loss_max, std::isfinite(v) ? v : 0.0);
  const Axes loss{cv::Rect(690, 90, 460, 560), x_min, x_max, 0.0, loss_max > 0.0 ? loss_max * 1.05 : 1.0};
  draw_axes(img, loss, "Loss", "epoch", x_ticks, true);
  draw_series(img, loss, epochs, train_loss, kPalette[0]);
  draw_series(img, loss, epochs, val_loss, kPalette[1]);

  draw_legend(img, {90, 735}, {{"train", kPalette[0]}, {"validation", kPalette[1]}});
  text(img, fmt::format("epochs: {}   best val acc: {:.2f}", history.size(),
                        *std::max_element(val_acc.begin(), val_acc.end())),
       {690, 735}, 0.55);
  save_png(img, out);
}

void plot_comparison(const ComparisonTable& table, const fs::path& out) {
  if (table.empty()) throw Error(ErrorKind::EmptyTable, "nothing to plot");
  cv::Mat img(kPlotHeight, kPlotWidth, CV_8UC3, kWhite);
  const Axes ax{cv::Rect(110, 90, 1020, 560), 0.0, static_cast<double>(table.size()), 0.0, 1.0};
  draw_axes(img, ax, "Model comparison", "model", 0, true);

  const double group_width = static_cast<double>(ax.area.width) / static_cast<double>(table.size());
  const double bar_width = group_width * 0.8 / 4.0;
  for (std::size_t g = 0; g < table.size(); ++g) {
    const auto& row = table[g];
    const double values[4] = {row.accuracy, row.precision, row.recall, row.f1};
    const double left = ax.area.x + group_width * (static_cast<double>(g) + 0.1);
    for (int m = 0; m < 4; ++m) {
      const double v = std::clamp(values[m], 0.0, 1.0);
      const int x0 = static_cast<int>(std::lround(left + bar_width * m));
      const int x1 = static_cast<int>(std::lround(left + bar_width * (m + 1))) - 2;
      const int y0 = ax.map(0.0, v).y;
      cv::rectangle(img, cv::Point(x0, y0), cv::Point(x1, ax.area.y + ax.area.height), kPalette[m], cv::FILLED);
      text_centered(img, fmt::format("{:.2f}", v), {(x0 + x1) / 2, y0 - 10}, 0.35);
    }
    text_centered(img, row.model,
                  {static_cast<int>(std::lround(ax.area.x + group_width * (static_cast<double>(g) + 0.5))),
                   ax.area.y + ax.area.height + 20},
                  0.55);
  }
  draw_legend(img, {110, 735},
              {{"accuracy", kPalette[0]}, {"precision", kPalette[1]}, {"recall", kPalette[2]}, {"f1", kPalette[3]}});
  save_png(img, out);
}

void export_comparison_csv(const ComparisonTable& table, const fs::path& out) {
  require_writable(out);
  std::ofstream file(out, std::ios::trunc);
  if (!file) throw Error(ErrorKind::UnwritablePath, "cannot write " + out.string());
  file << "model,accuracy,precision,recall,f1\n";
  for (const auto& r : table) {
    file << r.model << ',' << format_percent(r.accuracy) << ',' << format_percent(r.precision) << ','
         << format_percent(r.recall) << ',' << format_percent(r.f1) << '\n';
  }
  if (!file) throw Error(ErrorKind::Io, "failed writing " + out.string());
}

ComparisonTable parse_comparison_csv(const fs::path& in) {
  std::ifstream file(in);
  if (!file) throw Error(ErrorKind::MissingFile, "cannot read " + in.string());
  std::string line;
  if (!std::getline(file, line) || line != "model,accuracy,precision,recall,f1") {
    throw Error(ErrorKind::InvalidValue, "unexpected comparison header in " + in.string());
  }
  ComparisonTable table;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw Error(ErrorKind::InvalidValue, "malformed comparison row: " + line);
    table.push_back({cells[0], std::stod(cells[1]) / 100.0, std::stod(cells[2]) / 100.0, std::stod(cells[3]) / 100.0,
                     std::stod(cells[4]) / 100.0});
  }
  return table;
}

void write_image_grid(const std::vector<ImageF>& tiles, int columns, const fs::path& out) {
  if (tiles.empty()) throw Error(ErrorKind::EmptyTable, "no images to tile");
  if (columns < 1) throw Error(ErrorKind::InvalidValue, "columns must be >= 1");
  constexpr int kGutter = 4;
  int cell_h = 0;
  int cell_w = 0;
  for (const auto& t : tiles) {
    cell_h = std::max(cell_h, t.height);
    cell_w = std::max(cell_w, t.width);
  }
  const int n = static_cast<int>(tiles.size());
  const int cols = std::min(columns, n);
  const int rows = (n + cols - 1) / cols;
  cv::Mat grid(rows * cell_h + (rows + 1) * kGutter, cols * cell_w + (cols + 1) * kGutter, CV_8UC1, cv::Scalar(255));
  for (int i = 0; i < n; ++i) {
    const ImageF& t = tiles[static_cast<std::size_t>(i)];
    const int top = kGutter + (i / cols) * (cell_h + kGutter);
    const int left = kGutter + (i % cols) * (cell_w + kGutter);
    for (int y = 0; y < t.height; ++y) {
      for (int x = 0; x < t.width; ++x) {
        const double v = std::clamp(static_cast<double>(t.at(y, x, 0)), 0.0, 1.0);
        grid.at<std::uint8_t>(top + y, left + x) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  save_png(grid, out);
}

RunArtifactSet RunArtifactSet::for_directory(const fs::path& run_dir) {
  RunArtifactSet set;
  set.run_id = run_dir.filename().string();
  set.directory = run_dir;
  set.history_csv = run_dir / "history.csv";
  set.metrics_json = run_dir / "metrics.json";
  set.confusion_csv = run_dir / "confusion_matrix.csv";
  set.curves_png = run_dir / "curves.png";
  set.config_snapshot = run_dir / "config.snapshot";
  set.manifest_csv = run_dir / "manifest.csv";
  set.checkpoint_dir = run_dir / "checkpoint";
  return set;
}

std::vector<fs::path> RunArtifactSet::missing() const {
  std::vector<fs::path> out;
  for (const auto& p : {history_csv, metrics_json, confusion_csv, curves_png, config_snapshot, manifest_csv, checkpoint_dir}) {
    std::error_code ec;
    if (!fs::exists(p, ec)) out.push_back(p);
  }
  return out;
}

} // namespace lungct
