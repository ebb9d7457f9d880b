#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace chr {

/// H x W x 3 float image, row-major with interleaved channels, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int ch) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  float at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// 8-bit storage form of an Image, as written to and read from PNG.
struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Rounds each value to the nearest k/255 (after clamping to [0, 1]).
Image8 quantize(const Image& img);
/// Converts by division by 255.
Image dequantize(const Image8& img);

/// Lossless 8-bit RGB PNG. Throws DataError on I/O failures.
void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

}  // namespace chr
