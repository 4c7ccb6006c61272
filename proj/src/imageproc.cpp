#include "das/imageproc.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <string>

namespace das {
namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
  const double total = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= total;
  return k;
}

// Separable filter with replicated borders; output has the input's size.
std::vector<double> filter_same(const std::vector<double>& src, int w, int h,
                                const std::vector<double>& k) {
  const int r = static_cast<int>(k.size()) / 2;
  std::vector<double> tmp(src.size()), out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * src[y * w + std::clamp(x + i, 0, w - 1)];
      tmp[y * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
      out[y * w + x] = acc;
    }
  }
  return out;
}

// Separable filter keeping only fully-contained windows: (h-n+1) x (w-n+1).
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h,
                                 const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * src[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

int find_root(std::vector<int>& parent, int i) {
  while (parent[i] != i) {
    parent[i] = parent[parent[i]];
    i = parent[i];
  }
  return i;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[a] = b;
}

}  // namespace

namespace {

struct SobelField {
  std::vector<double> gx, gy, mag;
};

SobelField sobel_of_blurred(const Image& gray, double sigma) {
  if (gray.channels != 1) throw std::invalid_argument("canny: expected a single-channel image");
  constexpr int kKernel = 5;
  if (gray.width < kKernel || gray.height < kKernel) {
    throw std::invalid_argument("canny: image " + std::to_string(gray.width) + "x" +
                                std::to_string(gray.height) + " smaller than the 5x5 blur kernel");
  }
  const int w = gray.width, h = gray.height;
  const std::vector<double> src(gray.pixels.begin(), gray.pixels.end());
  const auto blurred = filter_same(src, w, h, gaussian_kernel(kKernel, sigma));
  auto px = [&](int y, int x) {
    return blurred[std::clamp(y, 0, h - 1) * w + std::clamp(x, 0, w - 1)];
  };
  SobelField f;
  f.gx.resize(blurred.size());
  f.gy.resize(blurred.size());
  f.mag.resize(blurred.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      f.gx[i] = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      f.gy[i] = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      f.mag[i] = std::hypot(f.gx[i], f.gy[i]);
    }
  }
  return f;
}

}  // namespace

std::vector<double> canny_gradient_magnitude(const Image& gray, double sigma) {
  return sobel_of_blurred(gray, sigma).mag;
}

BinaryMap canny(const Image& gray, const CannyParams& params) {
  if (!(params.low < params.high)) throw std::invalid_argument("canny: need low < high");
  const int w = gray.width, h = gray.height;
  const SobelField field = sobel_of_blurred(gray, params.sigma);
  const auto& mag = field.mag;
  auto m = [&](int y, int x) {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : mag[y * w + x];
  };

  std::vector<double> thin(mag.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = mag[y * w + x];
      if (v <= 0.0) continue;
      double angle = std::atan2(field.gy[y * w + x], field.gx[y * w + x]) * 180.0 / 3.14159265358979323846;
      if (angle < 0) angle += 180.0;
      int dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1;
      } else if (angle < 67.5) {
        dy = 1, dx = 1;
      } else if (angle < 112.5) {
        dy = 1;
      } else {
        dy = 1, dx = -1;
      }
      // Strict on the "before" side, inclusive on the "after" side, so a
      // symmetric ridge two pixels wide keeps exactly one pixel.
      if (v > m(y - dy, x - dx) && v >= m(y + dy, x + dx)) thin[y * w + x] = v;
    }
  }

  BinaryMap out(w, h);
  const double peak = *std::max_element(mag.begin(), mag.end());
  if (peak <= 0.0) return out;
  const double hi = params.high * peak, lo = params.low * peak;
  std::deque<int> queue;
  for (int i = 0; i < w * h; ++i) {
    if (thin[i] > 0.0 && thin[i] >= hi) {
      out.bits[i] = 1;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    const int y = i / w, x = i % w;
    for (int ny = y - 1; ny <= y + 1; ++ny) {
      for (int nx = x - 1; nx <= x + 1; ++nx) {
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        const int j = ny * w + nx;
        if (!out.bits[j] && thin[j] > 0.0 && thin[j] >= lo) {
          out.bits[j] = 1;
          queue.push_back(j);
        }
      }
    }
  }
  return out;
}

ComponentSet connected_components(const BinaryMap& map, const Image& values, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw std::invalid_argument("connected_components: connectivity must be 4 or 8");
  }
  if (values.width != map.width || values.height != map.height || values.channels != 1) {
    throw std::invalid_argument("connected_components: map is " + std::to_string(map.width) + "x" +
                                std::to_string(map.height) + " but values are " +
                                std::to_string(values.width) + "x" + std::to_string(values.height) +
                                "x" + std::to_string(values.channels));
  }
  const int w = map.width, h = map.height;
  ComponentSet cs;
  cs.width = w;
  cs.height = h;
  cs.labels.assign(static_cast<std::size_t>(w) * h, 0);

  // First pass: provisional labels plus equivalences.
  std::vector<int> parent{0};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!map.at(y, x)) continue;
      const int i = y * w + x;
      int label = 0;
      auto visit = [&](int ny, int nx) {
        if (ny < 0 || nx < 0 || nx >= w) return;
        const int other = cs.labels[ny * w + nx];
        if (other == 0) return;
        if (label == 0) {
          label = other;
        } else {
          unite(parent, label, other);
        }
      };
      visit(y, x - 1);
      visit(y - 1, x);
      if (connectivity == 8) {
        visit(y - 1, x - 1);
        visit(y - 1, x + 1);
      }
      if (label == 0) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      cs.labels[i] = label;
    }
  }

  // Second pass: resolve roots and renumber in raster order of first appearance.
  std::vector<int> remap(parent.size(), 0);
  for (std::size_t i = 0; i < cs.labels.size(); ++i) {
    if (cs.labels[i] == 0) continue;
    const int root = find_root(parent, cs.labels[i]);
    if (remap[root] == 0) {
      remap[root] = ++cs.count;
      cs.sums.push_back(0.0);
      cs.sizes.push_back(0);
    }
    const int k = remap[root];
    cs.labels[i] = k;
    cs.sums[k - 1] += values.pixels[i];
    cs.sizes[k - 1] += 1;
  }
  return cs;
}

double ssim(const Image& a, const Image& b, const SsimParams& p) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument("ssim: dimension mismatch " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height));
  }
  if (a.width < p.window || a.height < p.window) {
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(p.window) +
                                "x" + std::to_string(p.window) + " window");
  }
  const Image ga = to_gray(a), gb = to_gray(b);
  const int w = a.width, h = a.height;
  std::vector<double> x(ga.pixels.begin(), ga.pixels.end()), y(gb.pixels.begin(), gb.pixels.end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_kernel(p.window, p.sigma);
  const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
  const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k);
  const auto sxy = filter_valid(xy, w, h, k);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * (mx[i] * my[i]) + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

Image bilinear_resize(const Image& img, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0) {
    throw std::invalid_argument("bilinear_resize: target size must be positive");
  }
  if (new_width == img.width && new_height == img.height) return img;
  const auto ty = kernels::lerp_taps(static_cast<std::size_t>(img.height), static_cast<std::size_t>(new_height));
  const auto tx = kernels::lerp_taps(static_cast<std::size_t>(img.width), static_cast<std::size_t>(new_width));
  Image out(new_width, new_height, img.channels);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < new_height; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < new_width; ++x) {
        const auto& b = tx[x];
        auto src = [&](std::size_t yy, std::size_t xx) {
          return static_cast<double>(img.at(c, static_cast<int>(yy), static_cast<int>(xx)));
        };
        const double top = src(a.lo, b.lo) * (1.0 - b.frac) + src(a.lo, b.hi) * b.frac;
        const double bot = src(a.hi, b.lo) * (1.0 - b.frac) + src(a.hi, b.hi) * b.frac;
        out.at(c, y, x) = static_cast<float>(top * (1.0 - a.frac) + bot * a.frac);
      }
    }
  }
  return out;
}

}  // namespace das
