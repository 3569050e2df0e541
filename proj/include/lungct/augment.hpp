#pragma once

#include <array>
#include <utility>
#include <vector>

#include "lungct/dataset.hpp"
#include "lungct/image.hpp"
#include "lungct/rng.hpp"

namespace lungct {

/// Magnitudes and per-transform apply probabilities for online augmentation.
/// Flipping is horizontal only; `flip_prob` is its apply probability.
struct AugmentationPolicy {
  double rotation_max_deg = 15.0;
  double rotate_prob = 0.5;
  double flip_prob = 0.5;
  double brightness_low = 0.8;
  double brightness_high = 1.2;
  double brightness_prob = 0.5;
  int dropout_holes = 1;
  double dropout_hole_frac = 0.1;
  double dropout_prob = 0.5;

  /// Throws InvalidValue naming the offending field.
  void validate() const;

  static AugmentationPolicy disabled();

  friend bool operator==(const AugmentationPolicy&, const AugmentationPolicy&) = default;
};

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
};

/// Rotation about the image center with bilinear resampling; samples falling
/// outside the source are filled with 0. Multiples of 90 degrees use exact
/// trigonometry so they map the pixel grid onto itself.
ImageF rotate(const ImageF& image, double angle_deg);

ImageF flip_horizontal(const ImageF& image);
ImageF flip_vertical(const ImageF& image);

/// Multiply then clamp to [0, 1]. Throws NonPositiveFactor.
ImageF adjust_brightness(const ImageF& image, double factor);

/// Zero the part of `rect` that lies inside the image.
void zero_rect(ImageF& image, const Rect& rect);

/// Hole centers drawn uniformly over the image; holes are clipped at borders.
std::vector<Rect> sample_dropout_holes(int image_height, int image_width, int n_holes, int hole_height,
                                       int hole_width, Rng& rng);

/// Throws HoleLargerThanImage.
ImageF coarse_dropout(const ImageF& image, int n_holes, int hole_height, int hole_width, Rng& rng);

using OneHot = std::array<float, kNumClasses>;

/// Each transform fires independently with its probability; parameters are
/// drawn uniformly from the policy ranges. The label is returned untouched.
std::pair<Tensor299, OneHot> apply_policy(const Tensor299& image, const OneHot& label,
                                          const AugmentationPolicy& policy, Rng& rng);

} // namespace lungct
