#pragma once

// Closed-form attention map of a one-conv-layer classifier, computed with the
// plain kernels only.

#include <algorithm>
#include <cmath>
#include <random>

#include "das/attention.hpp"
#include "das/imageproc.hpp"
#include "test_support.hpp"

namespace das::testing {

// conv -> relu [tap] -> (optional maxpool [tap]) -> global average -> dense
inline ArchSpec one_layer_spec(bool pooled) {
  using K = LayerKind;
  ArchSpec s{"one", 8, 3, 3, {}};
  s.layers.push_back({K::conv, 4, 3, 1, 1});
  s.layers.push_back({K::relu});
  if (pooled) s.layers.push_back({K::maxpool, 0, 2, 2, 0});
  s.layers.push_back({K::global_avgpool});
  s.layers.push_back({K::dense, 3});
  s.tap = pooled ? 2 : 1;
  return s;
}

inline Classifier random_model(const ArchSpec& spec, std::mt19937& rng) {
  const Classifier init = Classifier::initialize(spec, rng());
  std::vector<Tensor> params;
  for (const auto& p : init.params()) params.push_back(random_tensor(p.shape(), rng, -0.6f, 0.6f));
  return Classifier(spec, params);
}

inline Image random_image(int size, std::mt19937& rng) { return Image::from_tensor(random_tensor({3, std::size_t(size), std::size_t(size)}, rng, 0, 1)); }

// Tap activations A [K,h,w] computed directly with the plain kernels.
inline Tensor tap_activations(const Classifier& m, const Image& img, bool pooled) {
  const auto& p = m.params();
  Tensor x = ops::add(img.to_tensor().reshaped({1, 3, 8, 8}), Tensor::full({1, 3, 8, 8}, -0.5f));
  Tensor a = ops::relu(ops::conv2d(x, p[0], p[1], {1, 1}));
  if (pooled) a = ops::max_pool2d(a, {2, 2});
  return a.reshaped({a.dim(1), a.dim(2), a.dim(3)});
}

// Closed form for this model family: dlogit_y/dA^k = W[k,y] / (h*w) everywhere.
inline std::vector<float> closed_form_map(const Classifier& m, const Image& img, int y, bool pooled, AttentionVariant v) {
  const Tensor a = tap_activations(m, img, pooled);
  const std::size_t k = a.dim(0), h = a.dim(1), w = a.dim(2), hw = h * w;
  const Tensor& dense = m.params()[2];
  const float logit = m.logits(stack_images({&img}))[static_cast<std::size_t>(y)];
  std::vector<double> weight(k);
  for (std::size_t c = 0; c < k; ++c) {
    const double g = dense[c * 3 + y] / static_cast<double>(hw);
    if (v == AttentionVariant::gradcam) {
      weight[c] = std::max(0.0, dense[c * 3 + y] * 1.0);
    } else {
      double sum_a = 0;
      for (std::size_t i = 0; i < hw; ++i) sum_a += a[c * hw + i];
      const double e = std::exp(static_cast<double>(logit));
      const double alpha = e * g * g / (2 * e * g * g + sum_a * e * g * g * g + 1e-8);
      weight[c] = g > 0 ? alpha * g * hw : 0.0;
    }
  }
  Image raw(static_cast<int>(w), static_cast<int>(h), 1);
  for (std::size_t i = 0; i < hw; ++i) {
    double acc = 0;
    for (std::size_t c = 0; c < k; ++c) acc += weight[c] * a[c * hw + i];
    raw.pixels[i] = static_cast<float>(std::max(0.0, acc));
  }
  const Image up = bilinear_resize(raw, 8, 8);
  const float peak = *std::max_element(up.pixels.begin(), up.pixels.end());
  std::vector<float> out(up.pixels);
  if (peak > 0) for (auto& x : out) x /= peak;
  return out;
}

}  // namespace das::testing
