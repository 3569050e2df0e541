#pragma once

#include <cstdint>
#include <filesystem>

#include "lungct/dataset.hpp"
#include "lungct/image.hpp"
#include "lungct/rng.hpp"

namespace lungct {

/// Procedural stand-in for CT slices: each class has its own texture
/// (ADC horizontal stripes, LCC vertical stripes, NORMAL concentric rings,
/// SCC checkerboard) with random period, phase, noise and source size.
RawImage synthesize_image(ClassLabel label, int side, Rng& rng);

struct SyntheticDatasetOptions {
  int images_per_class = 50;
  std::uint64_t seed = 7;
  /// Source sizes are drawn from these to exercise resizing.
  std::vector<int> sides = {112, 199, 224, 299};
};

/// Writes `<root>/<class folder>/img_NNN.png`. Returns the number of files written.
std::size_t write_synthetic_dataset(const std::filesystem::path& root, const SyntheticDatasetOptions& options);

} // namespace lungct
