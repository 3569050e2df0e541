// Acceptance gate: one PASS/FAIL/SKIP line per criterion. Exit status is
// non-zero when any executed criterion fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>

#include "lungct/augment.hpp"
#include "lungct/callbacks.hpp"
#include "lungct/experiment.hpp"
#include "lungct/focal_loss.hpp"
#include "lungct/metrics.hpp"
#include "lungct/preprocess.hpp"
#include "lungct/synthetic.hpp"
#include "support.hpp"

using namespace lungct;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// 1 + 2 ---------------------------------------------------------------------

struct MetricsOracleResult {
  Outcome equivalence;
  Outcome micro_identity;
};

MetricsOracleResult metrics_oracle() {
  const auto start = Clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  std::size_t mismatches = 0;
  std::size_t micro_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(10));
    const auto n = static_cast<std::size_t>(1 + rng.below(10000));
    const double skill = rng.uniform();
    std::vector<int> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      pred[i] = rng.bernoulli(skill) ? truth[i] : static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    const auto cm = confusion_matrix(truth, pred, static_cast<std::size_t>(k));
    const auto got = per_class_metrics(cm);
    const auto ref = testing::recount(truth, pred, k);
    auto compare = [&](double a, double b) {
      const double err = std::abs(a - b);
      worst = std::max(worst, err);
      if (err > 1e-12) ++mismatches;
    };
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      compare(got[c].precision, ref.precision[c]);
      compare(got[c].recall, ref.recall[c]);
      compare(got[c].f1, ref.f1[c]);
      if (got[c].support != ref.support[c]) ++mismatches;
    }
    const double acc = accuracy(cm);
    compare(acc, ref.accuracy);
    const auto micro = micro_metrics(cm);
    if (!(micro.precision == acc && micro.recall == acc && micro.precision == ref.micro_precision &&
          micro.recall == ref.micro_recall)) {
      ++micro_failures;
    }
  }
  const double elapsed = seconds_since(start);
  MetricsOracleResult r;
  r.equivalence.passed = mismatches == 0 && elapsed < 10.0;
  r.equivalence.detail = fmt::format("1000 instances, max |diff| {:.3g}, {} mismatches, {:.2f} s (limit 10 s)", worst,
                                     mismatches, elapsed);
  r.micro_identity.passed = micro_failures == 0;
  r.micro_identity.detail = fmt::format("micro P = micro R = accuracy on {} of 1000 instances", 1000 - micro_failures);
  return r;
}

// 3 ---------------------------------------------------------------------------

Outcome focal_reduction() {
  Rng rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto rows = static_cast<std::size_t>(1 + rng.below(32));
    Matrix probs(rows, 4), targets(rows, 4);
    double ce = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 4; ++c) sum += probs(r, c) = rng.uniform(0.01, 1.0);
      for (std::size_t c = 0; c < 4; ++c) probs(r, c) /= sum;
      const auto t = static_cast<std::size_t>(rng.below(4));
      targets(r, t) = 1.0;
      ce -= std::log(probs(r, t));
    }
    ce /= static_cast<double>(rows);
    worst = std::max(worst, testing::relative_error(focal_loss(probs, targets, FocalLossConfig{0.0, {1, 1, 1, 1}}), ce));
  }
  Matrix p(1, 4), t(1, 4);
  p.values = {0.9, 0.04, 0.03, 0.03};
  t(0, 0) = 1.0;
  const double single = focal_loss(p, t, FocalLossConfig{2.0, {0.25, 1, 1, 1}});
  const double hand = 0.25 * 0.1 * 0.1 * -std::log(0.9);
  const double single_err = testing::relative_error(single, hand);
  const bool matches_literal = fmt::format("{:.4e}", single) == "2.6340e-04";
  Outcome o;
  o.passed = worst <= 1e-7 && single_err <= 1e-6 && matches_literal;
  o.detail = fmt::format(
      "gamma=0 vs cross-entropy max rel err {:.2g} (limit 1e-7); single example {:.8e}, rel err {:.2g} vs "
      "0.25*0.1^2*(-ln 0.9) (limit 1e-6), prints as {:.4e}",
      worst, single, single_err, single);
  return o;
}

// 4 ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto start = Clock::now();
  Rng rng(4);
  double worst = 0.0;
  std::size_t checked = 0;
  for (double gamma : {0.0, 1.0, 2.0}) {
    for (std::size_t batch : {1U, 8U}) {
      for (int trial = 0; trial < 25; ++trial) {
        std::vector<double> alpha(4);
        for (auto& a : alpha) a = rng.uniform(0.05, 1.0);
        Matrix logits(batch, 4), targets(batch, 4);
        std::vector<int> t(batch);
        for (auto& v : logits.values) v = rng.uniform(-3.0, 3.0);
        for (std::size_t r = 0; r < batch; ++r) {
          t[r] = static_cast<int>(rng.below(4));
          targets(r, static_cast<std::size_t>(t[r])) = 1.0;
        }
        const auto analytic = focal_loss_with_grad(logits, targets, FocalLossConfig{gamma, alpha});
        for (std::size_t i = 0; i < logits.values.size(); ++i) {
          auto plus = logits.values;
          auto minus = logits.values;
          plus[i] += 1e-5;
          minus[i] -= 1e-5;
          const double fd = (testing::focal_from_logits(plus, t, 4, gamma, alpha) -
                             testing::focal_from_logits(minus, t, 4, gamma, alpha)) /
                            2e-5;
          worst = std::max(worst, testing::relative_error(analytic.grad.values[i], fd));
          ++checked;
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.passed = worst <= 1e-4 && elapsed < 30.0;
  o.detail = fmt::format("{} components, gamma in {{0,1,2}}, batch in {{1,8}}, max rel err {:.2g} (limit 1e-4), {:.2f} s",
                         checked, worst, elapsed);
  return o;
}

// 5 ---------------------------------------------------------------------------

AugmentationPolicy random_policy(Rng& rng) {
  AugmentationPolicy p;
  p.rotation_max_deg = rng.uniform(0.0, 45.0);
  p.rotate_prob = rng.uniform();
  p.flip_prob = rng.uniform();
  p.brightness_low = rng.uniform(0.5, 1.0);
  p.brightness_high = rng.uniform(1.0, 1.5);
  p.brightness_prob = rng.uniform();
  p.dropout_holes = static_cast<int>(rng.below(4));
  p.dropout_hole_frac = rng.uniform(0.01, 0.3);
  p.dropout_prob = rng.uniform();
  return p;
}

Outcome augmentation_suite() {
  const auto start = Clock::now();
  Rng rng(5);
  int label_ok = 0, closure_ok = 0, flip_ok = 0, identity_ok = 0, determinism_ok = 0;
  constexpr int kTrials = 200;
  for (int trial = 0; trial < kTrials; ++trial) {
    const Tensor299 img = testing::random_tensor299(rng);
    OneHot label{};
    label[rng.below(4)] = 1.0F;
    const AugmentationPolicy policy = random_policy(rng);
    const std::uint64_t seed = rng.next_u64();

    Rng a(seed), b(seed);
    const auto first = apply_policy(img, label, policy, a);
    const auto second = apply_policy(img, label, policy, b);
    label_ok += first.second == label ? 1 : 0;
    closure_ok += satisfies_tensor299(first.first.image()) ? 1 : 0;
    determinism_ok += first.first == second.first ? 1 : 0;
    flip_ok += flip_horizontal(flip_horizontal(img.image())) == img.image() ? 1 : 0;
    identity_ok += rotate(img.image(), 0.0) == img.image() && adjust_brightness(img.image(), 1.0) == img.image() ? 1 : 0;
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.passed = label_ok == kTrials && closure_ok == kTrials && flip_ok == kTrials && identity_ok == kTrials &&
             determinism_ok == kTrials && elapsed < 60.0;
  o.detail = fmt::format(
      "label {}/200, closure {}/200, flip involution {}/200, rotate(0)/brightness(1) {}/200, seed determinism "
      "{}/200, {:.1f} s (limit 60 s)",
      label_ok, closure_ok, flip_ok, identity_ok, determinism_ok, elapsed);
  return o;
}

// 6 ---------------------------------------------------------------------------

Outcome preprocessing_oracle() {
  const auto start = Clock::now();
  Rng rng(6);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int in_h = 1 + static_cast<int>(rng.below(16));
    const int in_w = 1 + static_cast<int>(rng.below(16));
    const int out_h = 1 + static_cast<int>(rng.below(24));
    const int out_w = 1 + static_cast<int>(rng.below(24));
    const int channels = rng.bernoulli(0.5) ? 1 : 3;
    const ImageF src = testing::random_unit(in_h, in_w, channels, rng);
    const ImageF out = resize_bilinear(src, out_h, out_w);
    const std::vector<double> ref(src.pixels.begin(), src.pixels.end());
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        for (int c = 0; c < channels; ++c) {
          const double expect = testing::bilinear_oracle(ref, in_h, in_w, channels, c, y, x, out_h, out_w);
          worst = std::max(worst, std::abs(out.at(y, x, c) - expect));
        }
      }
    }
  }
  bool exact = true;
  for (int trial = 0; trial < 20; ++trial) {
    const int h = 1 + static_cast<int>(rng.below(40));
    const int w = 1 + static_cast<int>(rng.below(40));
    const auto v = static_cast<std::uint8_t>(rng.below(256));
    exact = exact && resize_bilinear(RawImage(h, w, 1, v), 299, 299) == RawImage(299, 299, 1, v);
    exact = exact && resize_bilinear(ImageF(h, w, 1, v / 255.0F), 17, 33) == ImageF(17, 33, 1, v / 255.0F);
    const RawImage img = testing::random_raw(h, w, 1, rng);
    exact = exact && resize_bilinear(img, h, w) == img;
  }
  const RawImage big = testing::random_raw(299, 299, 1, rng);
  exact = exact && resize_bilinear(big, 299, 299) == big;
  const double elapsed = seconds_since(start);
  Outcome o;
  o.passed = worst <= 1e-6 && exact && elapsed < 30.0;
  o.detail = fmt::format("100 random images, max |diff| {:.2g} (limit 1e-6); constant/identity cases {}; {:.2f} s",
                         worst, exact ? "exact" : "NOT exact", elapsed);
  return o;
}

// 7 ---------------------------------------------------------------------------

Outcome callback_scenarios() {
  auto history = [](const std::vector<double>& v) {
    EpochHistory h;
    for (std::size_t i = 0; i < v.size(); ++i) h.append(EpochRow{static_cast<int>(i) + 1, 0, 0, v[i], 0, 1e-4});
    return h;
  };
  TrainConfig cfg;
  cfg.min_delta = 1e-4;
  cfg.lr_patience = 3;
  cfg.lr_factor = 0.5;
  const std::vector<double> plateau{1.0, 0.99, 0.99, 0.99, 0.99};
  std::vector<double> lrs;
  double lr = 1e-4;
  for (std::size_t n = 1; n <= plateau.size(); ++n) {
    lr = lr_on_plateau(history({plateau.begin(), plateau.begin() + static_cast<long>(n)}), cfg, lr);
    lrs.push_back(lr);
  }
  const bool plateau_ok = lrs == std::vector<double>{1e-4, 1e-4, 1e-4, 1e-4, 5e-5};

  cfg.early_stop_patience = 3;
  const std::vector<double> stop{1.0, 0.9, 0.91, 0.92, 0.93};
  std::vector<bool> decisions;
  for (std::size_t n = 1; n <= stop.size(); ++n) {
    decisions.push_back(early_stop(history({stop.begin(), stop.begin() + static_cast<long>(n)}), cfg));
  }
  const bool stop_ok = decisions == std::vector<bool>{false, false, false, false, true};
  Outcome o;
  o.passed = plateau_ok && stop_ok;
  o.detail = fmt::format("plateau lr trace [{}] (expect 5e-05 at epoch 5); early stop after epoch {}",
                         fmt::join(lrs, ", "),
                         std::find(decisions.begin(), decisions.end(), true) - decisions.begin() + 1);
  return o;
}

// 8 + 10 --------------------------------------------------------------------

ExperimentConfig toy_config(const fs::path& data, const fs::path& runs) {
  ExperimentConfig cfg;
  cfg.dataset_root = data;
  cfg.output_dir = runs;
  cfg.backbone = Backbone::DENSENET201;
  cfg.backbone_scale = BackboneScale::Reduced;
  cfg.pretrained = false;
  cfg.unfreeze_fraction = 1.0;
  cfg.dense_units = {32};
  cfg.dropout_rate = 0.2;
  cfg.train.max_epochs = 30;
  cfg.train.batch_size = 16;
  cfg.train.initial_lr = 1e-3;
  cfg.train.lr_patience = 2;
  cfg.train.early_stop_patience = 8;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> schema_problems(const RunArtifactSet& art) {
  std::vector<std::string> problems;
  for (const auto& p : art.missing()) problems.push_back("missing " + p.filename().string());
  if (!problems.empty()) return problems;
  try {
    const auto history = read_history_csv(art.history_csv);
    if (history.empty()) problems.push_back("history.csv has no rows");
    if (slurp(art.history_csv).rfind("epoch,train_loss,train_acc,val_loss,val_acc,lr\n", 0) != 0) {
      problems.push_back("history.csv header");
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("history.csv: ") + e.what());
  }
  try {
    const auto j = nlohmann::json::parse(slurp(art.metrics_json));
    if (!j.at("accuracy").is_number()) problems.push_back("metrics.json accuracy");
    if (j.at("per_class").size() != 4) problems.push_back("metrics.json per_class");
    for (const auto& c : j.at("per_class")) {
      for (const char* k : {"class", "precision", "recall", "f1", "support"}) {
        if (!c.contains(k)) problems.push_back(std::string("metrics.json per_class.") + k);
      }
    }
    for (const char* k : {"macro", "weighted"}) {
      for (const char* m : {"precision", "recall", "f1"}) {
        if (!j.at(k).at(m).is_number()) problems.push_back(fmt::format("metrics.json {}.{}", k, m));
      }
    }
    if (j.at("confusion_matrix").size() != 4) problems.push_back("metrics.json confusion_matrix");
    read_metrics_json(art.metrics_json);
  } catch (const std::exception& e) {
    problems.push_back(std::string("metrics.json: ") + e.what());
  }
  const cv::Mat curves = cv::imread(art.curves_png.string());
  if (curves.empty() || curves.cols != kPlotWidth || curves.rows != kPlotHeight) problems.push_back("curves.png");
  return problems;
}

struct ToyResults {
  Outcome end_to_end;
  Outcome determinism;
};

ToyResults toy_pipeline() {
  testing::TempDir dir("acceptance");
  SyntheticDatasetOptions opts;
  opts.images_per_class = 50;
  opts.sides = {kTensorSide};
  const std::size_t written = write_synthetic_dataset(dir / "data", opts);
  const ExperimentConfig cfg = toy_config(dir / "data", dir / "runs");

  ToyResults r;
  const auto start = Clock::now();
  ExperimentOutcome first;
  try {
    first = run_experiment(cfg, "first");
  } catch (const std::exception& e) {
    r.end_to_end.detail = std::string("pipeline threw: ") + e.what();
    r.determinism.detail = "first run failed";
    return r;
  }
  const double elapsed = seconds_since(start);
  const auto problems = schema_problems(first.artifacts);
  r.end_to_end.passed = written == 200 && first.report.accuracy >= 0.95 && elapsed < 300.0 && problems.empty();
  r.end_to_end.detail = fmt::format(
      "{} images, reduced DENSENET201 from scratch: test accuracy {:.4f} (need >= 0.95) after {} epochs, {:.0f} s "
      "(limit 300 s), artifacts {}",
      written, first.report.accuracy, first.training.history.size(), elapsed,
      problems.empty() ? "complete and schema-valid" : fmt::format("problems: {}", fmt::join(problems, "; ")));

  try {
    const auto second = run_experiment(cfg, "second");
    const std::string a = slurp(first.artifacts.metrics_json);
    const std::string b = slurp(second.artifacts.metrics_json);
    r.determinism.passed = !a.empty() && a == b;
    r.determinism.detail = fmt::format("metrics.json {} ({} bytes); history.csv {}", a == b ? "byte-identical" : "DIFFERS",
                                       a.size(),
                                       slurp(first.artifacts.history_csv) == slurp(second.artifacts.history_csv)
                                           ? "byte-identical"
                                           : "differs");
  } catch (const std::exception& e) {
    r.determinism.detail = std::string("second run threw: ") + e.what();
  }
  return r;
}

void report(int id, const char* name, const Outcome& o, int& failures) {
  std::printf("%s  criterion %d  %-28s %s\n", o.passed ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  if (!o.passed) ++failures;
}

} // namespace

int main() {
  int failures = 0;
  const auto metrics = metrics_oracle();
  report(1, "metrics oracle equivalence", metrics.equivalence, failures);
  report(2, "micro-average identity", metrics.micro_identity, failures);
  report(3, "focal-loss reduction", focal_reduction(), failures);
  report(4, "focal-loss gradient check", gradient_check(), failures);
  report(5, "augmentation properties", augmentation_suite(), failures);
  report(6, "bilinear resize oracle", preprocessing_oracle(), failures);
  report(7, "callback state machines", callback_scenarios(), failures);
  const auto toy = toy_pipeline();
  report(8, "toy end-to-end", toy.end_to_end, failures);
  std::printf(
      "SKIP  criterion 9  %-28s needs the public chest-CT dataset and hours of compute; run "
      "`lungct benchmark --dataset_root <dataset> --weights-dir <dir>`\n",
      "full-scale reproduction");
  report(10, "determinism", toy.determinism, failures);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
