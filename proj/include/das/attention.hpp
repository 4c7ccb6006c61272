#pragma once

// Gradient-weighted class activation maps (Grad-CAM and Grad-CAM++).

#include <filesystem>
#include <string>
#include <vector>

#include "das/autodiff.hpp"
#include "das/image.hpp"
#include "das/modelzoo.hpp"

namespace das {

enum class AttentionVariant { gradcam, gradcam_pp };

AttentionVariant parse_attention_variant(const std::string& s);
std::string to_string(AttentionVariant v);

/// Max-normalized map at input resolution; values in [0,1].
struct AttentionMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;
  bool zero = false;  // raw map was identically zero

  Image to_image() const;
  double mass_inside(const BinaryMap& mask) const;  // fraction of total mass, 0 for a zero map
};

/// Map built inside `g` so that it stays differentiable w.r.t. the image through
/// the feature maps. Channel weights and the normalizer are constants.
struct TracedAttention {
  Var map;     // [H, W]
  Var logits;  // [1, classes]
  bool zero = false;
};

/// image: [1, C, H, W] or [C, H, W], traced in `g` (must require grad).
TracedAttention attention_traced(const Classifier& model, Graph& g, Var image, int y, AttentionVariant variant);

AttentionMap attention(const Classifier& model, const Image& image, int y,
                       AttentionVariant variant = AttentionVariant::gradcam_pp);

/// Channel weights from the tap activations A [K,h,w] and dp/dA (same shape).
/// Exposed for testing.
std::vector<double> channel_weights(const Tensor& activations, const Tensor& grads, float score,
                                    AttentionVariant variant);

/// Pairwise SSIM of the models' attention maps for one image.
std::vector<std::vector<double>> attention_similarity(const std::vector<const Classifier*>& models, const Image& image,
                                                      int y, AttentionVariant variant = AttentionVariant::gradcam_pp);

void write_attention_png(const std::filesystem::path& path, const AttentionMap& map);
/// Heat-colormap overlay blended over the image at 0.5.
Image attention_overlay(const AttentionMap& map, const Image& image);

}  // namespace das
