#include "lungct/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "lungct/error.hpp"

namespace lungct {

namespace {

// Source coordinate for output index `i` under half-pixel centers, clamped to
// the valid sample range.
struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> make_taps(int in_size, int out_size) {
  std::vector<Tap> taps(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (int i = 0; i < out_size; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in_size - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
  }
  return taps;
}

template <class T, class Store>
Image<T> resize_impl(const Image<T>& image, int out_height, int out_width, Store store) {
  if (out_height <= 0 || out_width <= 0) {
    throw Error(ErrorKind::ZeroSizeTarget, "resize target must be at least 1x1");
  }
  if (image.height <= 0 || image.width <= 0 || image.channels <= 0) {
    throw Error(ErrorKind::ShapeMismatch, "cannot resize an empty image");
  }
  const auto rows = make_taps(image.height, out_height);
  const auto cols = make_taps(image.width, out_width);
  Image<T> out(out_height, out_width, image.channels);
  for (int y = 0; y < out_height; ++y) {
    const Tap& ty = rows[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const Tap& tx = cols[static_cast<std::size_t>(x)];
      for (int c = 0; c < image.channels; ++c) {
        // Two lerps keep constant regions exact.
        const double a = image.at(ty.lo, tx.lo, c);
        const double b = image.at(ty.lo, tx.hi, c);
        const double d = image.at(ty.hi, tx.lo, c);
        const double e = image.at(ty.hi, tx.hi, c);
        const double top = a + tx.frac * (b - a);
        const double bottom = d + tx.frac * (e - d);
        out.at(y, x, c) = store(top + ty.frac * (bottom - top));
      }
    }
  }
  return out;
}

std::uint8_t round_to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

} // namespace

RawImage decode_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::UndecodableFile, "no such file: " + path.string());
  }
  cv::Mat mat;
  try {
    mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::UndecodableFile, path.string() + ": " + e.what());
  }
  if (mat.empty()) {
    throw Error(ErrorKind::UndecodableFile, "cannot decode " + path.string());
  }
  if (mat.depth() != CV_8U) {
    throw Error(ErrorKind::UnsupportedBitDepth, path.string() + " is not 8 bits per channel");
  }
  cv::Mat converted;
  switch (mat.channels()) {
    case 1: converted = mat; break;
    case 2: cv::extractChannel(mat, converted, 0); break;
    case 3: cv::cvtColor(mat, converted, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(mat, converted, cv::COLOR_BGRA2RGB); break;
    default: throw Error(ErrorKind::UndecodableFile, "unsupported channel count in " + path.string());
  }
  if (!converted.isContinuous()) converted = converted.clone();
  RawImage out(converted.rows, converted.cols, converted.channels());
  std::copy(converted.datastart, converted.dataend, out.pixels.begin());
  return out;
}

RawImage to_grayscale(const RawImage& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) {
    throw Error(ErrorKind::ShapeMismatch, "grayscale conversion needs 1 or 3 channels");
  }
  RawImage out(image.height, image.width, 1);
  for (std::size_t i = 0, j = 0; j < out.pixels.size(); i += 3, ++j) {
    const double y = 0.299 * image.pixels[i] + 0.587 * image.pixels[i + 1] + 0.114 * image.pixels[i + 2];
    out.pixels[j] = round_to_u8(y);
  }
  return out;
}

RawImage resize_bilinear(const RawImage& image, int out_height, int out_width) {
  return resize_impl(image, out_height, out_width, round_to_u8);
}

ImageF resize_bilinear(const ImageF& image, int out_height, int out_width) {
  return resize_impl(image, out_height, out_width, [](double v) { return static_cast<float>(v); });
}

ImageF normalize_unit(const RawImage& image) {
  ImageF out(image.height, image.width, image.channels);
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(static_cast<double>(v) / 255.0); });
  return out;
}

ImageF replicate_channels(const ImageF& image) {
  if (image.channels != 1) {
    throw Error(ErrorKind::AlreadyMultiChannel, "expected a single-channel image");
  }
  ImageF out(image.height, image.width, 3);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    out.pixels[3 * i] = out.pixels[3 * i + 1] = out.pixels[3 * i + 2] = image.pixels[i];
  }
  return out;
}

RawImage prepare_gray299(const std::filesystem::path& path) {
  return resize_bilinear(to_grayscale(decode_image(path)), kTensorSide, kTensorSide);
}

Tensor299 to_tensor299(const RawImage& gray299) {
  return Tensor299(replicate_channels(normalize_unit(gray299)));
}

Sample preprocess_record(const ImageRecord& record) {
  Sample sample{to_tensor299(prepare_gray299(record.path)), {}};
  const auto hot = one_hot(record.label, kNumClasses);
  std::copy(hot.begin(), hot.end(), sample.label.begin());
  return sample;
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buffer[1 << 14];
  while (in.read(buffer, sizeof buffer) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buffer[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

namespace {

constexpr char kCacheMagic[8] = {'L', 'C', 'T', 'G', '2', '9', '9', '\1'};

std::filesystem::path cache_entry(const std::filesystem::path& dir, std::uint64_t hash) {
  char name[32];
  std::snprintf(name, sizeof name, "%016llx.g299", static_cast<unsigned long long>(hash));
  return dir / name;
}

} // namespace

PreprocessCache::PreprocessCache(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::error_code ec;
  std::filesystem::create_directories(directory_, ec);
  if (ec) throw Error(ErrorKind::UnwritablePath, "cannot create cache directory " + directory_.string());
}

std::optional<RawImage> PreprocessCache::lookup(std::uint64_t content_hash) const {
  std::ifstream in(cache_entry(directory_, content_hash), std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::int32_t dims[3];
  if (!in.read(magic, sizeof magic) || !std::equal(std::begin(magic), std::end(magic), kCacheMagic) ||
      !in.read(reinterpret_cast<char*>(dims), sizeof dims) || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0) {
    return std::nullopt;
  }
  RawImage image(dims[0], dims[1], dims[2]);
  if (!in.read(reinterpret_cast<char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()))) {
    return std::nullopt;
  }
  return image;
}

void PreprocessCache::store(std::uint64_t content_hash, const RawImage& image) const {
  const auto target = cache_entry(directory_, content_hash);
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    const std::int32_t dims[3] = {image.height, image.width, image.channels};
    out.write(kCacheMagic, sizeof kCacheMagic);
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw Error(ErrorKind::UnwritablePath, "cannot write cache entry " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

RawImage PreprocessCache::load_or_prepare(const std::filesystem::path& source) {
  const auto hash = hash_file(source);
  if (auto hit = lookup(hash)) return *std::move(hit);
  RawImage prepared = prepare_gray299(source);
  store(hash, prepared);
  return prepared;
}

} // namespace lungct
