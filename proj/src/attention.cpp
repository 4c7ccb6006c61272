#include "das/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "das/imageproc.hpp"

namespace das {

AttentionVariant parse_attention_variant(const std::string& s) {
  if (s == "gradcam") return AttentionVariant::gradcam;
  if (s == "gradcam_pp") return AttentionVariant::gradcam_pp;
  throw std::invalid_argument("unknown attention variant '" + s + "' (expected gradcam or gradcam_pp)");
}

std::string to_string(AttentionVariant v) { return v == AttentionVariant::gradcam ? "gradcam" : "gradcam_pp"; }

Image AttentionMap::to_image() const {
  Image img(width, height, 1);
  img.pixels = values;
  return img;
}

double AttentionMap::mass_inside(const BinaryMap& mask) const {
  if (mask.width != width || mask.height != height)
    throw std::invalid_argument("mass_inside: mask size does not match the map");
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    total += values[i];
    if (mask.bits[i]) inside += values[i];
  }
  return total > 0.0 ? inside / total : 0.0;
}

std::vector<double> channel_weights(const Tensor& a, const Tensor& grads, float score, AttentionVariant variant) {
  if (a.shape() != grads.shape() || a.rank() != 3) throw ShapeError("channel_weights", a.shape(), grads.shape());
  const std::size_t k = a.dim(0), hw = a.dim(1) * a.dim(2);
  const auto ad = a.data(), gd = grads.data();
  std::vector<double> w(k, 0.0);
  if (variant == AttentionVariant::gradcam) {
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hw; ++i) acc += std::max(0.0, static_cast<double>(gd[c * hw + i]));
      w[c] = acc / static_cast<double>(hw);
    }
    return w;
  }
  // Grad-CAM++ with p = exp(score): dp/dA = e g, d2p/dA2 = e g^2, d3p/dA3 = e g^3.
  const double e = std::exp(std::min(static_cast<double>(score), 80.0));
  constexpr double kEps = 1e-8;
  for (std::size_t c = 0; c < k; ++c) {
    double sum_a = 0.0;
    for (std::size_t i = 0; i < hw; ++i) sum_a += ad[c * hw + i];
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      const double g = gd[c * hw + i];
      if (g <= 0.0) continue;
      const double g2 = g * g;
      const double alpha = e * g2 / (2.0 * e * g2 + sum_a * e * g2 * g + kEps);
      acc += alpha * g;  // the common factor e of relu(dp/dA) is dropped
    }
    w[c] = acc;
  }
  return w;
}

TracedAttention attention_traced(const Classifier& model, Graph& g, Var image, int y, AttentionVariant variant) {
  if (y < 0 || y >= model.classes())
    throw std::out_of_range("attention: class " + std::to_string(y) + " out of range [0," +
                            std::to_string(model.classes()) + ")");
  Var x = image;
  if (x.shape().size() == 3) {
    const Shape& s = x.shape();
    x = ag::reshape(x, {1, s[0], s[1], s[2]});
  }
  if (x.shape().size() != 4 || x.shape()[0] != 1) throw ShapeError("attention", x.shape(), "expected one image");
  const std::size_t H = x.shape()[2], W = x.shape()[3];
  const auto out = model.forward(g, x);
  const Var score = ag::sum(ag::slice(out.logits, 1, static_cast<std::size_t>(y), static_cast<std::size_t>(y) + 1));
  const Var targets[] = {out.features};
  const Tensor grad = backward(g, score, targets)[out.features];

  const Shape& fs = out.features.shape();
  const std::size_t k = fs[1], h = fs[2], w = fs[3];
  const Shape khw{k, h, w};
  const auto weights = channel_weights(out.features.value().reshaped(khw), grad.reshaped(khw),
                                       score.value().item(), variant);
  const double wmax = *std::max_element(weights.begin(), weights.end());
  TracedAttention result;
  result.logits = out.logits;
  if (!(wmax > 0.0)) {
    result.zero = true;
    result.map = g.constant(Tensor::zeros({H, W}));
    return result;
  }
  // Positive rescaling does not change the normalized map but keeps floats well scaled.
  std::vector<float> wf(k);
  for (std::size_t c = 0; c < k; ++c) wf[c] = static_cast<float>(weights[c] / wmax);
  const Var wv = g.constant(Tensor({1, k}, std::move(wf)));
  const Var raw = ag::relu(ag::matmul(wv, ag::reshape(out.features, {k, h * w})));
  const Var up = ag::reshape(ag::upsample_bilinear(ag::reshape(raw, {1, 1, h, w}), H, W), {H, W});
  const auto uv = up.value().data();
  const float peak = *std::max_element(uv.begin(), uv.end());
  if (!(peak > 0.0f)) {
    result.zero = true;
    result.map = up;
    return result;
  }
  result.map = ag::scalar_mul(up, 1.0f / peak);
  return result;
}

AttentionMap attention(const Classifier& model, const Image& image, int y, AttentionVariant variant) {
  if (image.width != model.input_size() || image.height != model.input_size())
    throw std::invalid_argument("attention: image size does not match the model input");
  Graph g;
  const Var img = g.input(image.to_tensor());
  const TracedAttention t = attention_traced(model, g, img, y, variant);
  AttentionMap m;
  m.width = image.width;
  m.height = image.height;
  m.values = t.map.value().to_vector();
  for (auto& v : m.values) v = std::clamp(v, 0.0f, 1.0f);
  m.zero = t.zero;
  return m;
}

std::vector<std::vector<double>> attention_similarity(const std::vector<const Classifier*>& models, const Image& image,
                                                      int y, AttentionVariant variant) {
  if (models.size() < 2) throw std::invalid_argument("attention_similarity: need at least 2 models");
  std::vector<Image> maps;
  for (const Classifier* m : models) maps.push_back(attention(*m, image, y, variant).to_image());
  const std::size_t n = maps.size();
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) s[i][j] = s[j][i] = ssim(maps[i], maps[j]);
  return s;
}

void write_attention_png(const std::filesystem::path& path, const AttentionMap& map) {
  write_png(path, map.to_image());
}

Image attention_overlay(const AttentionMap& map, const Image& image) {
  if (map.width != image.width || map.height != image.height)
    throw std::invalid_argument("attention_overlay: size mismatch");
  Image out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const float v = map.values[static_cast<std::size_t>(y) * map.width + x];
      const float heat[3] = {std::clamp(3.0f * v, 0.0f, 1.0f), std::clamp(3.0f * v - 1.0f, 0.0f, 1.0f),
                             std::clamp(3.0f * v - 2.0f, 0.0f, 1.0f)};
      for (int c = 0; c < 3; ++c) {
        const float base = image.at(image.channels == 3 ? c : 0, y, x);
        out.at(c, y, x) = 0.5f * base + 0.5f * heat[c];
      }
    }
  }
  return out;
}

}  // namespace das
