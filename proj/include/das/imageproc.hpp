#pragma once

// Non-differentiable image primitives: edge extraction, connected-component
// labeling, SSIM and bilinear resampling.

#include "das/image.hpp"

namespace das {

struct CannyParams {
  double sigma = 1.4;  // 5x5 Gaussian
  double low = 0.1;    // fractions of the maximum gradient magnitude
  double high = 0.3;
};

/// Gaussian blur, Sobel, non-maximum suppression, hysteresis. Expects one channel.
BinaryMap canny(const Image& gray, const CannyParams& params = {});

/// Sobel gradient magnitude of the Gaussian-blurred image, as used by canny().
std::vector<double> canny_gradient_magnitude(const Image& gray, double sigma);

struct ComponentSet {
  int width = 0;
  int height = 0;
  std::vector<int> labels;     // 0 = background, 1..count
  int count = 0;
  std::vector<double> sums;    // G_k, index k-1
  std::vector<std::size_t> sizes;  // N_k, index k-1
};

/// Two-pass union-find labeling. Labels are numbered in raster order of first
/// appearance. connectivity must be 4 or 8.
ComponentSet connected_components(const BinaryMap& map, const Image& values, int connectivity = 4);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

/// Mean SSIM over all fully-contained Gaussian windows. Multi-channel inputs are
/// averaged to gray first.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Corner-aligned bilinear interpolation, per channel.
Image bilinear_resize(const Image& img, int new_width, int new_height);

}  // namespace das
