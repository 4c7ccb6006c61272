#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "das/imageproc.hpp"
#include "oracles.hpp"

using namespace das;

namespace {

BinaryMap random_map(int w, int h, std::mt19937& rng, double p = 0.45) {
  std::bernoulli_distribution on(p);
  BinaryMap m(w, h);
  for (auto& b : m.bits) b = on(rng) ? 1 : 0;
  return m;
}

Image step_image(int w, int h, int step_col) {
  Image img(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) img.at(0, y, x) = x >= step_col ? 0.8f : 0.2f;
  }
  return img;
}

}  // namespace

TEST_CASE("canny on a constant image finds nothing") {
  CHECK(canny(Image(20, 20, 1, 0.5f)).count() == 0);
}

TEST_CASE("canny on a vertical step yields one vertical line at the step") {
  const int step = 12;
  const BinaryMap edges = canny(step_image(24, 20, step));
  REQUIRE(edges.count() > 0);
  std::set<int> cols;
  for (int y = 0; y < edges.height; ++y) {
    int in_row = 0;
    for (int x = 0; x < edges.width; ++x) {
      if (edges.at(y, x)) {
        ++in_row;
        cols.insert(x);
      }
    }
    CHECK(in_row == 1);
  }
  CHECK(cols.size() == 1);
  CHECK(std::abs(*cols.begin() - step) <= 1);
}

TEST_CASE("canny output lies inside the nonzero gradient support and is monotone in high") {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Image img = das::testing::smooth_test_image(32, 28, 1, rng);
    const auto mag = canny_gradient_magnitude(img, 1.4);
    const BinaryMap loose = canny(img, {1.4, 0.1, 0.2});
    const BinaryMap tight = canny(img, {1.4, 0.1, 0.5});
    for (std::size_t i = 0; i < loose.bits.size(); ++i) {
      if (loose.bits[i]) CHECK(mag[i] > 0.0);
      if (tight.bits[i]) CHECK(loose.bits[i]);
    }
  }
}

TEST_CASE("canny argument errors") {
  CHECK_THROWS(canny(Image(4, 10, 1)));
  CHECK_THROWS(canny(Image(10, 10, 1), {1.4, 0.5, 0.3}));
  CHECK_THROWS(canny(Image(10, 10, 3)));
}

TEST_CASE("connected components: analytic cases") {
  BinaryMap empty(6, 6);
  CHECK(connected_components(empty, Image(6, 6, 1)).count == 0);

  BinaryMap two(6, 6);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 2; ++x) {
      two.at(y, x) = 1;
      two.at(y + 3, x + 3) = 1;
    }
  }
  const ComponentSet cs = connected_components(two, Image(6, 6, 1, 0.5f));
  REQUIRE(cs.count == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(cs.sizes[k] == 4);
    CHECK(cs.sums[k] == doctest::Approx(2.0));
  }

  BinaryMap diagonal(3, 3);
  diagonal.at(0, 0) = diagonal.at(1, 1) = diagonal.at(2, 2) = 1;
  CHECK(connected_components(diagonal, Image(3, 3, 1), 4).count == 3);
  CHECK(connected_components(diagonal, Image(3, 3, 1), 8).count == 1);
}

TEST_CASE("connected components match a flood-fill oracle") {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const BinaryMap m = random_map(16, 16, rng);
    for (int conn : {4, 8}) {
      int oracle_count = 0;
      const auto oracle = das::testing::flood_fill_labels(m, conn, &oracle_count);
      const ComponentSet cs = connected_components(m, Image(16, 16, 1, 1.0f), conn);
      CHECK(cs.count == oracle_count);
      CHECK(das::testing::same_partition(cs.labels, oracle));
      std::size_t total = 0;
      for (int k = 0; k < cs.count; ++k) {
        CHECK(cs.sizes[k] > 0);
        total += cs.sizes[k];
      }
      CHECK(total == m.count());
    }
  }
}

TEST_CASE("connected components: scan order only renames labels") {
  std::mt19937 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const BinaryMap m = random_map(13, 9, rng);
    BinaryMap flipped(13, 9);
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 13; ++x) flipped.at(8 - y, 12 - x) = m.at(y, x);
    }
    const auto a = connected_components(m, Image(13, 9, 1), 4).labels;
    const auto b_flipped = connected_components(flipped, Image(13, 9, 1), 4).labels;
    std::vector<int> b(a.size());
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 13; ++x) b[y * 13 + x] = b_flipped[(8 - y) * 13 + (12 - x)];
    }
    CHECK(das::testing::same_partition(a, b));
  }
}

TEST_CASE("connected components errors") {
  CHECK_THROWS(connected_components(BinaryMap(4, 4), Image(5, 4, 1)));
  CHECK_THROWS(connected_components(BinaryMap(4, 4), Image(4, 4, 1), 6));
}

TEST_CASE("ssim basics") {
  std::mt19937 rng(8);
  const Image x = das::testing::smooth_test_image(32, 32, 1, rng);
  CHECK(ssim(x, x) == 1.0);
  Image inv = x;
  for (auto& v : inv.pixels) v = 1.0f - v;
  CHECK(std::abs(ssim(x, inv) - das::testing::brute_force_ssim(x, inv)) < 1e-4);
  CHECK(ssim(x, inv) == ssim(inv, x));
  CHECK(ssim(x, inv) < 1.0);

  const Image rgb = das::testing::smooth_test_image(20, 16, 3, rng);
  CHECK(ssim(rgb, rgb) == 1.0);
  CHECK_THROWS(ssim(Image(20, 20, 1), Image(20, 21, 1)));
  CHECK_THROWS(ssim(Image(10, 10, 1), Image(10, 10, 1)));
}

TEST_CASE("ssim matches the brute-force oracle") {
  std::mt19937 rng(12);
  std::normal_distribution<float> noise(0.0f, 0.08f);
  for (int trial = 0; trial < 10; ++trial) {
    const Image a = das::testing::smooth_test_image(24, 20, trial % 2 ? 3 : 1, rng);
    Image b = a;
    for (auto& v : b.pixels) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
    const double got = ssim(a, b);
    CHECK(std::abs(got - das::testing::brute_force_ssim(a, b)) < 1e-4);
    CHECK(got <= 1.0);
    CHECK(got == ssim(b, a));
  }
}

TEST_CASE("bilinear resize") {
  std::mt19937 rng(2);
  const Image img = das::testing::smooth_test_image(7, 5, 3, rng);
  CHECK(bilinear_resize(img, 7, 5) == img);

  const Image flat = bilinear_resize(Image(3, 4, 1, 0.25f), 9, 2);
  for (float v : flat.pixels) CHECK(v == doctest::Approx(0.25f));

  Image checker(2, 2, 1);
  checker.at(0, 0, 1) = 1.0f;
  checker.at(0, 1, 0) = 1.0f;
  const Image up = bilinear_resize(checker, 4, 4);
  const double t = 1.0 / 3, f = 4.0 / 9, n = 5.0 / 9;
  const double expected[4][4] = {{0, t, 2 * t, 1}, {t, f, n, 2 * t}, {2 * t, n, f, t}, {1, 2 * t, t, 0}};
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) CHECK(up.at(0, y, x) == doctest::Approx(expected[y][x]).epsilon(1e-6));
  }
  CHECK_THROWS(bilinear_resize(img, 0, 3));
}

TEST_CASE("png round trip quantizes to 8 bits") {
  const auto dir = std::filesystem::temp_directory_path() / "das_png_test";
  std::filesystem::create_directories(dir);
  std::mt19937 rng(9);
  const Image img = das::testing::smooth_test_image(13, 7, 3, rng);
  write_png(dir / "rgb.png", img);
  const Image back = read_png(dir / "rgb.png");
  REQUIRE(back.channels == 3);
  REQUIRE(back.width == 13);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  }
  write_png(dir / "gray.png", to_gray(img));
  CHECK(read_png(dir / "gray.png").channels == 1);

  std::ofstream(dir / "fake.png") << "not a png";
  CHECK_THROWS_WITH(read_png(dir / "fake.png"), doctest::Contains("not a PNG"));
  CHECK_THROWS(read_png(dir / "missing.png"));
}
