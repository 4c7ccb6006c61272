#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "das/tensor.hpp"

namespace das {

/// Planar float image: pixels[(c * height + y) * width + x], values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }

  /// [channels, height, width]
  Tensor to_tensor() const;
  /// Accepts [c,h,w] or [h,w].
  static Image from_tensor(const Tensor& t);

  friend bool operator==(const Image&, const Image&) = default;
};

struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMap() = default;
  BinaryMap(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;

  friend bool operator==(const BinaryMap&, const BinaryMap&) = default;
};

/// Channel average.
Image to_gray(const Image& img);

/// 8-bit PNG, grayscale or RGB. Alpha is dropped on read; 16-bit is reduced to 8.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
Image binary_to_image(const BinaryMap& map);

}  // namespace das
