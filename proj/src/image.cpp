#include "das/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace das {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {
  if (w < 0 || h < 0 || c <= 0) throw std::invalid_argument("Image: bad dimensions");
}

Tensor Image::to_tensor() const {
  return Tensor({static_cast<std::size_t>(channels), static_cast<std::size_t>(height),
                 static_cast<std::size_t>(width)},
                pixels);
}

Image Image::from_tensor(const Tensor& t) {
  Image img;
  if (t.rank() == 3) {
    img.channels = static_cast<int>(t.dim(0));
    img.height = static_cast<int>(t.dim(1));
    img.width = static_cast<int>(t.dim(2));
  } else if (t.rank() == 2) {
    img.channels = 1;
    img.height = static_cast<int>(t.dim(0));
    img.width = static_cast<int>(t.dim(1));
  } else {
    throw ShapeError("Image::from_tensor", t.shape(), "expected [c,h,w] or [h,w]");
  }
  img.pixels = t.to_vector();
  return img;
}

std::size_t BinaryMap::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

Image to_gray(const Image& img) {
  if (img.channels == 1) return img;
  Image out(img.width, img.height, 1);
  const std::size_t n = img.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int c = 0; c < img.channels; ++c) acc += img.pixels[c * n + i];
    out.pixels[i] = static_cast<float>(acc / img.channels);
  }
  return out;
}

Image binary_to_image(const BinaryMap& map) {
  Image img(map.width, map.height, 1);
  for (std::size_t i = 0; i < map.bits.size(); ++i) img.pixels[i] = map.bits[i] ? 1.0f : 0.0f;
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw std::runtime_error(msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw std::runtime_error("cannot open " + path.string());
  png_byte sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  try {
    png_init_io(png, file.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int ch = png_get_channels(png, info);
    if (ch != 1 && ch != 3) throw std::runtime_error("unsupported channel count");
    std::vector<png_byte> raw(static_cast<std::size_t>(w) * h * ch);
    std::vector<png_bytep> rows(h);
    for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * ch;
    png_read_image(png, rows.data());

    Image img(w, h, ch);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < ch; ++c) {
          img.at(c, y, x) = static_cast<float>(rows[y][x * ch + c]) / 255.0f;
        }
      }
    }
    return img;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.rfind("not a PNG", 0) == 0) throw;
    throw std::runtime_error(path.string() + ": " + what);
  }
}

void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("write_png: need 1 or 3 channels");
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  const int ch = img.channels;
  std::vector<png_byte> raw(static_cast<std::size_t>(img.width) * img.height * ch);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < ch; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.0f, 1.0f);
        raw[(static_cast<std::size_t>(y) * img.width + x) * ch + c] =
            static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, raw.data() + static_cast<std::size_t>(y) * img.width * ch);
    }
    png_write_end(png, nullptr);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace das
