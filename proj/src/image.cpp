#include "lungct/image.hpp"

#include <string>

#include "lungct/error.hpp"

namespace lungct {

bool satisfies_tensor299(const ImageF& image) {
  if (image.height != kTensorSide || image.width != kTensorSide || image.channels != kTensorChannels ||
      image.pixels.size() != static_cast<std::size_t>(kTensorSide) * kTensorSide * kTensorChannels) {
    return false;
  }
  for (std::size_t i = 0; i < image.pixels.size(); i += kTensorChannels) {
    const float v = image.pixels[i];
    if (!(v >= 0.0F && v <= 1.0F)) return false;
    if (image.pixels[i + 1] != v || image.pixels[i + 2] != v) return false;
  }
  return true;
}

Tensor299::Tensor299(ImageF image) : image_(std::move(image)) {
  if (image_.height != kTensorSide || image_.width != kTensorSide || image_.channels != kTensorChannels) {
    throw Error(ErrorKind::ShapeMismatch, "expected 299x299x3, got " + std::to_string(image_.height) + "x" +
                                              std::to_string(image_.width) + "x" + std::to_string(image_.channels));
  }
  if (!satisfies_tensor299(image_)) {
    throw Error(ErrorKind::InvalidValue, "tensor values must lie in [0,1] with identical channels");
  }
}

} // namespace lungct
