#include <doctest.h>

#include <fstream>

#include <opencv2/imgcodecs.hpp>

#include "lungct/error.hpp"
#include "lungct/reporting.hpp"
#include "lungct/synthetic.hpp"
#include "support.hpp"

using namespace lungct;

namespace {

EpochHistory history(int epochs) {
  EpochHistory h;
  for (int e = 1; e <= epochs; ++e) {
    h.append(EpochRow{e, 1.0 / e, 1.0 - 0.5 / e, 1.1 / e, 0.9 - 0.4 / e, 1e-4});
  }
  return h;
}

ComparisonTable table(int n) {
  ComparisonTable t;
  const char* names[] = {"DENSENET201", "INCEPTIONV3", "VGG16", "VGG19"};
  for (int i = 0; i < n; ++i) t.push_back(ComparisonRow{names[i], 0.9 - 0.2 * i, 0.88 - 0.2 * i, 0.87 - 0.2 * i, 0.86 - 0.2 * i});
  return t;
}

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

} // namespace

TEST_CASE("training curves") {
  testing::TempDir dir("plots");
  for (int epochs : {20, 1}) {
    const auto out = dir / ("curves" + std::to_string(epochs) + ".png");
    plot_history(history(epochs), out);
    const cv::Mat img = cv::imread(out.string());
    CHECK(img.cols == kPlotWidth);
    CHECK(img.rows == kPlotHeight);
  }
  CHECK_THROWS_WITH_AS(plot_history(EpochHistory{}, dir / "x.png"), doctest::Contains("EmptyHistory"), Error);
  CHECK_THROWS_WITH_AS(plot_history(history(3), dir / "missing" / "x.png"), doctest::Contains("UnwritablePath"), Error);
}

TEST_CASE("comparison chart and CSV") {
  testing::TempDir dir("compare");
  plot_comparison(table(4), dir / "four.png");
  plot_comparison(table(1), dir / "one.png");
  CHECK(std::filesystem::file_size(dir / "four.png") > 0);
  CHECK_THROWS_WITH_AS(plot_comparison({}, dir / "none.png"), doctest::Contains("EmptyTable"), Error);

  export_comparison_csv(table(4), dir / "comparison.csv");
  CHECK(line_count(dir / "comparison.csv") == 5);
  std::ifstream in(dir / "comparison.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "model,accuracy,precision,recall,f1");
  const auto back = parse_comparison_csv(dir / "comparison.csv");
  REQUIRE(back.size() == 4);
  CHECK(back[0].model == "DENSENET201");
  CHECK(back[0].accuracy == doctest::Approx(0.9));
}

TEST_CASE("image grid and run layout") {
  testing::TempDir dir("grid");
  Rng rng(1);
  std::vector<ImageF> tiles;
  for (int i = 0; i < 5; ++i) tiles.push_back(testing::random_unit(30, 30, 3, rng));
  write_image_grid(tiles, 4, dir / "grid.png");
  const cv::Mat g = cv::imread((dir / "grid.png").string(), cv::IMREAD_UNCHANGED);
  CHECK(g.cols == 4 * 30 + 5 * 4);
  CHECK(g.rows == 2 * 30 + 3 * 4);

  const auto run = RunArtifactSet::for_directory(dir / "run");
  CHECK(run.history_csv.filename() == "history.csv");
  CHECK(run.metrics_json.filename() == "metrics.json");
  CHECK(run.missing().size() == 7);
}

TEST_CASE("synthetic classes are distinct and reproducible") {
  Rng a(4), b(4);
  CHECK(synthesize_image(ClassLabel::SCC, 64, a) == synthesize_image(ClassLabel::SCC, 64, b));
  testing::TempDir dir("synth");
  SyntheticDatasetOptions opts;
  opts.images_per_class = 2;
  opts.sides = {32};
  CHECK(write_synthetic_dataset(dir.path(), opts) == 8);
  CHECK(std::filesystem::exists(dir / "large.cell.carcinoma"));
}
