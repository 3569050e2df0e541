// Shared helpers and independent reference implementations for the tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "lungct/image.hpp"
#include "lungct/rng.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("lungct-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

private:
  fs::path path_;
};

inline lungct::RawImage random_raw(int h, int w, int c, lungct::Rng& rng) {
  lungct::RawImage img(h, w, c);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

inline lungct::ImageF random_unit(int h, int w, int c, lungct::Rng& rng) {
  lungct::ImageF img(h, w, c);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

/// Random image in [0,1] with three identical channels, 299 x 299.
inline lungct::Tensor299 random_tensor299(lungct::Rng& rng) {
  lungct::ImageF img(lungct::kTensorSide, lungct::kTensorSide, lungct::kTensorChannels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto v = static_cast<float>(rng.uniform());
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  }
  return lungct::Tensor299(std::move(img));
}

/// Per-pixel bilinear reference: half-pixel centers, edge clamping, weights
/// written out as the explicit four-tap sum.
inline double bilinear_oracle(const std::vector<double>& src, int in_h, int in_w, int channels, int c, int oy,
                              int ox, int out_h, int out_w) {
  const double sy = std::clamp((oy + 0.5) * in_h / out_h - 0.5, 0.0, static_cast<double>(in_h - 1));
  const double sx = std::clamp((ox + 0.5) * in_w / out_w - 0.5, 0.0, static_cast<double>(in_w - 1));
  const int y0 = static_cast<int>(std::floor(sy));
  const int x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, in_h - 1);
  const int x1 = std::min(x0 + 1, in_w - 1);
  const double wy = sy - y0;
  const double wx = sx - x0;
  auto px = [&](int y, int x) { return src[(static_cast<std::size_t>(y) * in_w + x) * channels + c]; };
  return (1 - wy) * (1 - wx) * px(y0, x0) + (1 - wy) * wx * px(y0, x1) + wy * (1 - wx) * px(y1, x0) +
         wy * wx * px(y1, x1);
}

struct RecountMetrics {
  std::vector<double> precision, recall, f1;
  std::vector<long> support;
  double accuracy = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
};

/// Direct recount from label lists, without building a matrix.
inline RecountMetrics recount(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  RecountMetrics m;
  long correct = 0;
  long tp_sum = 0, fp_sum = 0, fn_sum = 0;
  for (int c = 0; c < k; ++c) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c) ++support;
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.precision.push_back(p);
    m.recall.push_back(r);
    m.f1.push_back(p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r));
    m.support.push_back(support);
    tp_sum += tp;
    fp_sum += fp;
    fn_sum += fn;
  }
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i] ? 1 : 0;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.micro_precision = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fp_sum);
  m.micro_recall = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fn_sum);
  return m;
}

/// Focal loss straight from logits: softmax, clip, -alpha_t (1-p_t)^gamma log p_t.
inline double focal_from_logits(const std::vector<double>& logits, const std::vector<int>& targets, int k,
                                double gamma, const std::vector<double>& alpha) {
  const std::size_t rows = targets.size();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = logits[r * k];
    for (int c = 1; c < k; ++c) mx = std::max(mx, logits[r * k + c]);
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits[r * k + c] - mx);
    const int t = targets[r];
    double p = std::exp(logits[r * k + t] - mx) / z;
    p = std::clamp(p, 1e-7, 1.0 - 1e-7);
    total += -alpha[t] * std::pow(1.0 - p, gamma) * std::log(p);
  }
  return total / static_cast<double>(rows);
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

} // namespace testing
