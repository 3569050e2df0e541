#pragma once

#include <array>
#include <filesystem>
#include <optional>

#include "lungct/dataset.hpp"
#include "lungct/image.hpp"

namespace lungct {

/// Decodes PNG/JPEG to 8-bit RGB or grayscale. Alpha is dropped.
RawImage decode_image(const std::filesystem::path& path);

/// BT.601 luminance, rounded half away from zero. Single-channel input passes through.
RawImage to_grayscale(const RawImage& image);

/// Bilinear resampling with half-pixel centers and edge clamping. The 8-bit
/// overload rounds to the nearest integer.
RawImage resize_bilinear(const RawImage& image, int out_height, int out_width);
ImageF resize_bilinear(const ImageF& image, int out_height, int out_width);

ImageF normalize_unit(const RawImage& image);

/// Throws AlreadyMultiChannel unless the input has one channel.
ImageF replicate_channels(const ImageF& image);

/// decode -> grayscale -> 299x299 resize, kept in 8 bits. This is the
/// compact form held in memory for whole datasets.
RawImage prepare_gray299(const std::filesystem::path& path);

/// normalize -> replicate on a prepared 299x299 grayscale image.
Tensor299 to_tensor299(const RawImage& gray299);

struct Sample {
  Tensor299 image;
  std::array<float, kNumClasses> label{};
};

Sample preprocess_record(const ImageRecord& record);

/// Content-addressed cache of prepared images. Entries are keyed by a hash
/// of the source file bytes and round-trip bit-exactly.
class PreprocessCache {
public:
  explicit PreprocessCache(std::filesystem::path directory);

  RawImage load_or_prepare(const std::filesystem::path& source);
  std::optional<RawImage> lookup(std::uint64_t content_hash) const;
  void store(std::uint64_t content_hash, const RawImage& image) const;

  const std::filesystem::path& directory() const noexcept { return directory_; }

private:
  std::filesystem::path directory_;
};

/// FNV-1a over the file contents.
std::uint64_t hash_file(const std::filesystem::path& path);

} // namespace lungct
