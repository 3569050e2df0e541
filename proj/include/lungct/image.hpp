#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace lungct {

/// Interleaved height x width x channels image.
template <class T>
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c),
        pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {}

  std::size_t index(int y, int x, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int y, int x, int c = 0) noexcept { return pixels[index(y, x, c)]; }
  const T& at(int y, int x, int c = 0) const noexcept { return pixels[index(y, x, c)]; }

  bool empty() const noexcept { return pixels.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

using RawImage = Image<std::uint8_t>;
using ImageF = Image<float>;

inline constexpr int kTensorSide = 299;
inline constexpr int kTensorChannels = 3;

/// 299x299x3 image with values in [0, 1] and three identical channels.
class Tensor299 {
public:
  Tensor299() : image_(kTensorSide, kTensorSide, kTensorChannels) {}

  /// Throws ShapeMismatch / InvalidValue if the invariants do not hold.
  explicit Tensor299(ImageF image);

  const ImageF& image() const noexcept { return image_; }
  ImageF release() && noexcept { return std::move(image_); }

  friend bool operator==(const Tensor299&, const Tensor299&) = default;

private:
  ImageF image_;
};

/// True when shape, range and channel equality all hold.
bool satisfies_tensor299(const ImageF& image);

} // namespace lungct
