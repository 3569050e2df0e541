#include "lungct/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lungct/error.hpp"

namespace lungct {

namespace {

void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorKind::InvalidValue, std::string(name) + " must be a probability in [0,1]");
  }
}

// cos/sin with exact values at multiples of 90 degrees.
std::pair<double, double> cos_sin_deg(double angle_deg) {
  const double turns = angle_deg / 90.0;
  if (turns == std::round(turns)) {
    const auto quarter = static_cast<long long>(std::round(turns));
    switch (((quarter % 4) + 4) % 4) {
      case 0: return {1.0, 0.0};
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      default: return {0.0, -1.0};
    }
  }
  const double rad = angle_deg * std::numbers::pi / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

} // namespace

void AugmentationPolicy::validate() const {
  if (!(rotation_max_deg >= 0.0) || !std::isfinite(rotation_max_deg)) {
    throw Error(ErrorKind::InvalidValue, "rotation_max_deg must be finite and >= 0");
  }
  require_probability(rotate_prob, "rotate_prob");
  require_probability(flip_prob, "flip_prob");
  require_probability(brightness_prob, "brightness_prob");
  require_probability(dropout_prob, "dropout_prob");
  if (!(brightness_low > 0.0)) throw Error(ErrorKind::InvalidValue, "brightness_low must be > 0");
  if (!(brightness_low <= brightness_high) || !std::isfinite(brightness_high)) {
    throw Error(ErrorKind::InvalidValue, "brightness_high must be finite and >= brightness_low");
  }
  if (dropout_holes < 0) throw Error(ErrorKind::InvalidValue, "dropout_holes must be >= 0");
  if (!(dropout_hole_frac > 0.0 && dropout_hole_frac < 1.0)) {
    throw Error(ErrorKind::InvalidValue, "dropout_hole_frac must lie in (0,1)");
  }
}

AugmentationPolicy AugmentationPolicy::disabled() {
  AugmentationPolicy p;
  p.rotate_prob = p.flip_prob = p.brightness_prob = p.dropout_prob = 0.0;
  return p;
}

ImageF rotate(const ImageF& image, double angle_deg) {
  if (!std::isfinite(angle_deg)) throw Error(ErrorKind::InvalidValue, "rotation angle must be finite");
  const auto [cs, sn] = cos_sin_deg(angle_deg);
  const double cy = (image.height - 1) / 2.0;
  const double cx = (image.width - 1) / 2.0;
  const double max_y = image.height - 1;
  const double max_x = image.width - 1;
  constexpr double kEdge = 1e-9;
  ImageF out(image.height, image.width, image.channels, 0.0F);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // Inverse map: output pixel -> source location (counter-clockwise rotation on screen).
      const double dx = x - cx;
      const double dy = y - cy;
      double sx = cs * dx - sn * dy + cx;
      double sy = sn * dx + cs * dy + cy;
      if (sx < -kEdge || sy < -kEdge || sx > max_x + kEdge || sy > max_y + kEdge) continue;
      sx = std::clamp(sx, 0.0, max_x);
      sy = std::clamp(sy, 0.0, max_y);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const int y1 = std::min(y0 + 1, image.height - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < image.channels; ++c) {
        const double a = image.at(y0, x0, c);
        const double b = image.at(y0, x1, c);
        const double d = image.at(y1, x0, c);
        const double e = image.at(y1, x1, c);
        const double top = a + fx * (b - a);
        const double bottom = d + fx * (e - d);
        out.at(y, x, c) = static_cast<float>(top + fy * (bottom - top));
      }
    }
  }
  return out;
}

ImageF flip_horizontal(const ImageF& image) {
  ImageF out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(y, image.width - 1 - x, c) = image.at(y, x, c);
    }
  }
  return out;
}

ImageF flip_vertical(const ImageF& image) {
  ImageF out(image.height, image.width, image.channels);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) out.at(image.height - 1 - y, x, c) = image.at(y, x, c);
    }
  }
  return out;
}

ImageF adjust_brightness(const ImageF& image, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorKind::NonPositiveFactor, "brightness factor must be finite and > 0");
  }
  ImageF out = image;
  for (float& v : out.pixels) v = std::clamp(static_cast<float>(v * factor), 0.0F, 1.0F);
  return out;
}

void zero_rect(ImageF& image, const Rect& rect) {
  const int y0 = std::max(rect.top, 0);
  const int x0 = std::max(rect.left, 0);
  const int y1 = std::min(rect.top + rect.height, image.height);
  const int x1 = std::min(rect.left + rect.width, image.width);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      for (int c = 0; c < image.channels; ++c) image.at(y, x, c) = 0.0F;
    }
  }
}

std::vector<Rect> sample_dropout_holes(int image_height, int image_width, int n_holes, int hole_height,
                                       int hole_width, Rng& rng) {
  if (hole_height > image_height || hole_width > image_width) {
    throw Error(ErrorKind::HoleLargerThanImage, "dropout hole exceeds image size");
  }
  if (n_holes < 0 || hole_height < 0 || hole_width < 0) {
    throw Error(ErrorKind::InvalidValue, "dropout hole count and size must be >= 0");
  }
  std::vector<Rect> holes;
  holes.reserve(static_cast<std::size_t>(n_holes));
  for (int i = 0; i < n_holes; ++i) {
    const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(image_height)));
    const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(image_width)));
    holes.push_back({cy - hole_height / 2, cx - hole_width / 2, hole_height, hole_width});
  }
  return holes;
}

ImageF coarse_dropout(const ImageF& image, int n_holes, int hole_height, int hole_width, Rng& rng) {
  ImageF out = image;
  for (const Rect& r : sample_dropout_holes(image.height, image.width, n_holes, hole_height, hole_width, rng)) {
    zero_rect(out, r);
  }
  return out;
}

std::pair<Tensor299, OneHot> apply_policy(const Tensor299& image, const OneHot& label,
                                          const AugmentationPolicy& policy, Rng& rng) {
  ImageF img = image.image();
  if (rng.bernoulli(policy.rotate_prob)) {
    img = rotate(img, rng.uniform(-policy.rotation_max_deg, policy.rotation_max_deg));
  }
  if (rng.bernoulli(policy.flip_prob)) img = flip_horizontal(img);
  if (rng.bernoulli(policy.brightness_prob)) {
    img = adjust_brightness(img, rng.uniform(policy.brightness_low, policy.brightness_high));
  }
  if (policy.dropout_holes > 0 && rng.bernoulli(policy.dropout_prob)) {
    const int hole_h = std::max(1, static_cast<int>(std::lround(policy.dropout_hole_frac * img.height)));
    const int hole_w = std::max(1, static_cast<int>(std::lround(policy.dropout_hole_frac * img.width)));
    img = coarse_dropout(img, policy.dropout_holes, hole_h, hole_w, rng);
  }
  return {Tensor299(std::move(img)), label};
}

} // namespace lungct
