#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "das/attention.hpp"
#include "das/imageproc.hpp"
#include "attention_oracle.hpp"
#include "test_support.hpp"

using namespace das;
using namespace das::testing;


TEST_CASE("variant names") {
  CHECK(parse_attention_variant("gradcam") == AttentionVariant::gradcam);
  CHECK(parse_attention_variant("gradcam_pp") == AttentionVariant::gradcam_pp);
  CHECK(to_string(AttentionVariant::gradcam_pp) == "gradcam_pp");
  CHECK_THROWS(parse_attention_variant("cam"));
}

TEST_CASE("one-layer model matches the closed-form map") {
  std::mt19937 rng(21);
  for (bool pooled : {false, true}) {
    for (auto variant : {AttentionVariant::gradcam, AttentionVariant::gradcam_pp}) {
      for (int trial = 0; trial < 10; ++trial) {
        const Classifier m = random_model(one_layer_spec(pooled), rng);
        const Image img = random_image(8, rng);
        const int y = trial % 3;
        const AttentionMap map = attention(m, img, y, variant);
        const auto expect = closed_form_map(m, img, y, pooled, variant);
        REQUIRE(map.values.size() == expect.size());
        double worst = 0;
        for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, double(std::abs(map.values[i] - expect[i])));
        CHECK(worst < 1e-5);
        if (!map.zero) CHECK(*std::max_element(map.values.begin(), map.values.end()) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("zero feature gradients give an all-zero flagged map") {
  std::mt19937 rng(4);
  const ArchSpec spec = one_layer_spec(false);
  Classifier m = random_model(spec, rng);
  auto params = m.params();
  // Class 1 gets only negative dense weights: relu(dp/dA) == 0 everywhere.
  std::vector<float> dense = params[2].to_vector();
  for (std::size_t c = 0; c < 4; ++c) dense[c * 3 + 1] = -std::abs(dense[c * 3 + 1]) - 0.1f;
  params[2] = Tensor(params[2].shape(), dense);
  m = Classifier(spec, params);
  for (auto v : {AttentionVariant::gradcam, AttentionVariant::gradcam_pp}) {
    const AttentionMap map = attention(m, random_image(8, rng), 1, v);
    CHECK(map.zero);
    for (float x : map.values) CHECK(x == 0.0f);
  }
}

TEST_CASE("scaling the logits keeps the peak location") {
  std::mt19937 rng(8);
  const ArchSpec spec = one_layer_spec(true);
  for (int trial = 0; trial < 10; ++trial) {
    const Classifier m = random_model(spec, rng);
    auto params = m.params();
    params[2] = ops::scalar_mul(params[2], 3.0f);
    params[3] = ops::scalar_mul(params[3], 3.0f);
    const Classifier scaled(spec, params);
    const Image img = random_image(8, rng);
    for (auto v : {AttentionVariant::gradcam, AttentionVariant::gradcam_pp}) {
      const auto a = attention(m, img, 0, v), b = attention(scaled, img, 0, v);
      if (a.zero) continue;
      const auto pa = std::max_element(a.values.begin(), a.values.end()) - a.values.begin();
      const auto pb = std::max_element(b.values.begin(), b.values.end()) - b.values.begin();
      CHECK(pa == pb);
    }
  }
}

TEST_CASE("attention errors, values, overlay") {
  std::mt19937 rng(2);
  const Classifier m = random_model(one_layer_spec(false), rng);
  const Image img = random_image(8, rng);
  CHECK_THROWS_AS(attention(m, img, 3), std::out_of_range);
  CHECK_THROWS_AS(attention(m, img, -1), std::out_of_range);
  CHECK_THROWS(attention(m, random_image(6, rng), 0));
  const AttentionMap map = attention(m, img, 0);
  for (float v : map.values) CHECK((v >= 0.0f && v <= 1.0f));
  const Image ov = attention_overlay(map, img);
  CHECK(ov.width == img.width);
  CHECK(ov.height == img.height);
  BinaryMap all(8, 8);
  std::fill(all.bits.begin(), all.bits.end(), 1);
  if (!map.zero) CHECK(map.mass_inside(all) == doctest::Approx(1.0));
  CHECK(map.mass_inside(BinaryMap(8, 8)) == 0.0);
}

TEST_CASE("attention similarity matrix") {
  std::mt19937 rng(6);
  // The SSIM window is 11x11, so the maps need at least that resolution.
  const Image img = random_image(16, rng);
  ArchSpec big = one_layer_spec(false);
  big.input_size = 16;
  const Classifier m1 = random_model(big, rng), m2 = random_model(big, rng);
  const auto dup = attention_similarity({&m1, &m1}, img, 0);
  for (const auto& row : dup)
    for (double v : row) CHECK(v == doctest::Approx(1.0));
  const auto s = attention_similarity({&m1, &m2, &m1}, img, 0);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s[i][i] == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s[i][j] == s[j][i]);
  }
  CHECK_THROWS(attention_similarity({&m1}, img, 0));
}

TEST_CASE("traced attention is differentiable through the feature maps") {
  std::mt19937 rng(13);
  const Classifier m = random_model(one_layer_spec(true), rng);
  const Image img = random_image(8, rng);
  Graph g;
  const Var x = g.input(img.to_tensor());
  const TracedAttention t = attention_traced(m, g, x, 0, AttentionVariant::gradcam_pp);
  if (!t.zero) {
    const Tensor grad = backward(g, ag::sum(t.map))[x];
    CHECK(grad.shape() == img.to_tensor().shape());
    CHECK(all_finite(grad));
    double mag = 0;
    for (float v : grad.data()) mag += std::abs(v);
    CHECK(mag > 0);
  }
}
