#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eusml/error.hpp"

namespace eusml {

/// Row-major, channel-interleaved 8-bit raster with 1 or 3 channels.
class ImageBuffer {
 public:
  ImageBuffer() = default;

  ImageBuffer(int width, int height, int channels, std::uint8_t fill = 0)
      : ImageBuffer(width, height, channels,
                    std::vector<std::uint8_t>(checked_size(width, height, channels), fill)) {}

  ImageBuffer(int width, int height, int channels, std::vector<std::uint8_t> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    require(data_.size() == checked_size(width, height, channels), ErrorKind::parameter,
            "image data length does not match width*height*channels");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::uint8_t at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  static std::size_t checked_size(int width, int height, int channels) {
    require(width >= 1 && height >= 1, ErrorKind::parameter, "image dimensions must be >= 1");
    require(channels == 1 || channels == 3, ErrorKind::parameter, "image must have 1 or 3 channels");
    return static_cast<std::size_t>(width) * height * channels;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Real-valued raster used for intermediate math and normalized model input.
struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Boolean raster with the spatial size of an image.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) {
    bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  bool any() const { return count() > 0; }
};

inline std::uint8_t saturate_u8(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  if (v >= 255.0) return 255;
  return static_cast<std::uint8_t>(std::lround(v));
}

inline std::uint8_t luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return saturate_u8(0.299 * r + 0.587 * g + 0.114 * b);
}

/// BT.601 luma, rounded. 1-channel input is returned unchanged.
inline ImageBuffer to_grayscale(const ImageBuffer& img) {
  if (img.channels() == 1) return img;
  ImageBuffer out(img.width(), img.height(), 1);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    dst[i] = luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  }
  return out;
}

/// Mean of the grayscale pixel values, in [0,255].
inline double mean_intensity(const ImageBuffer& img) {
  const ImageBuffer gray = to_grayscale(img);
  std::uint64_t sum = 0;
  for (auto v : gray.data()) sum += v;
  return static_cast<double>(sum) / static_cast<double>(gray.pixel_count());
}

inline ImageBuffer gray_to_rgb(const ImageBuffer& img) {
  if (img.channels() == 3) return img;
  ImageBuffer out(img.width(), img.height(), 3);
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < img.pixel_count(); ++i) {
    dst[3 * i] = dst[3 * i + 1] = dst[3 * i + 2] = src[i];
  }
  return out;
}

inline FloatImage to_float(const ImageBuffer& img) {
  FloatImage out(img.width(), img.height(), img.channels());
  auto src = img.data();
  for (std::size_t i = 0; i < src.size(); ++i) out.data[i] = src[i];
  return out;
}

/// Rounds once and saturates to [0,255].
inline ImageBuffer to_u8(const FloatImage& img) {
  ImageBuffer out(img.width, img.height, img.channels);
  auto dst = out.data();
  for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = saturate_u8(img.data[i]);
  return out;
}

/// Bilinear resampling with pixel-center alignment.
inline ImageBuffer resize_bilinear(const ImageBuffer& img, int width, int height) {
  require(width >= 1 && height >= 1, ErrorKind::parameter, "resize target must be >= 1x1");
  if (img.width() == width && img.height() == height) return img;
  const int ch = img.channels();
  ImageBuffer out(width, height, ch);
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = img.at(x0, y0, c) + wx * (img.at(x1, y0, c) - img.at(x0, y0, c));
        const double bot = img.at(x0, y1, c) + wx * (img.at(x1, y1, c) - img.at(x0, y1, c));
        out.at(x, y, c) = saturate_u8(top + wy * (bot - top));
      }
    }
  }
  return out;
}

}  // namespace eusml
