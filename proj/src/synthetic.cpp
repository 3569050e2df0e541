#include "lungct/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <opencv2/imgcodecs.hpp>

#include "lungct/error.hpp"

namespace lungct {

RawImage synthesize_image(ClassLabel label, int side, Rng& rng) {
  const double period = side * rng.uniform(0.05, 0.10);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double contrast = rng.uniform(0.25, 0.4);
  const double base = rng.uniform(0.4, 0.6);
  const double k = 2.0 * std::numbers::pi / period;
  const double c = (side - 1) / 2.0;
  RawImage img(side, side, 1);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double wave = 0.0;
      switch (label) {
        case ClassLabel::ADC: wave = std::sin(k * y + phase); break;
        case ClassLabel::LCC: wave = std::sin(k * x + phase); break;
        case ClassLabel::NORMAL: wave = std::sin(k * std::hypot(x - c, y - c) + phase); break;
        case ClassLabel::SCC: wave = std::sin(k * x + phase) * std::sin(k * y + phase) * 1.5; break;
      }
      const double v = base + contrast * wave + rng.uniform(-0.08, 0.08);
      img.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
    }
  }
  return img;
}

std::size_t write_synthetic_dataset(const std::filesystem::path& root, const SyntheticDatasetOptions& options) {
  std::error_code ec;
  std::size_t written = 0;
  for (ClassLabel label : kAllClasses) {
    const auto dir = root / std::string(canonical_dir_name(label));
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::UnwritablePath, "cannot create " + dir.string());
    for (int i = 0; i < options.images_per_class; ++i) {
      Rng rng = Rng::derive(options.seed, static_cast<std::uint64_t>(index_of(label)), static_cast<std::uint64_t>(i));
      const int side = options.sides[rng.below(options.sides.size())];
      const RawImage img = synthesize_image(label, side, rng);
      const cv::Mat mat(img.height, img.width, CV_8UC1, const_cast<std::uint8_t*>(img.pixels.data()));
      const auto path = dir / fmt::format("img_{:03d}.png", i);
      if (!cv::imwrite(path.string(), mat)) throw Error(ErrorKind::UnwritablePath, "cannot write " + path.string());
      ++written;
    }
  }
  return written;
}

} // namespace lungct
