#pragma once

// Attention distraction, attention evasion and smoothness losses, the Adam
// update and the full texture optimization loop.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "das/attention.hpp"
#include "das/autodiff.hpp"
#include "das/image.hpp"
#include "das/imageproc.hpp"
#include "das/modelzoo.hpp"
#include "das/render.hpp"

namespace das {

/// Which loss terms enter the objective (used by the ablations).
struct LossTerms {
  bool distraction = true;
  bool evasion = true;
  bool smooth = true;
  friend bool operator==(const LossTerms&, const LossTerms&) = default;
};

struct AttackConfig {
  double lambda = 1e-5;        // evasion weight
  double beta = 8.0;           // edge weight inside the evasion loss
  double tau = 0.5;            // attention threshold, fraction of the map maximum
  double lr = 0.01;
  double weight_decay = 1e-4;  // pulls towards the seed-painted texture
  int epochs = 5;
  int minibatch = 8;
  int connectivity = 4;
  int target_label = 0;        // ground-truth class whose attention is distracted
  AttentionVariant variant = AttentionVariant::gradcam_pp;
  std::uint64_t seed = 1;
  double smooth_weight = 1e-4; // multiplier on the smoothness term
  UvRect patch_region = {0.05, 0.55, 0.45, 0.95};
  CannyParams canny;
  int edge_dilate = 1;
  LossTerms terms;

  /// Throws std::invalid_argument naming the offending field.
  void validate(std::size_t condition_count, int class_count) const;
};

struct LossRecord {
  double distraction = 0, evasion = 0, smooth = 0, total = 0;
};

struct AttackState {
  Tensor texture;  // T_adv [3, h, w]
  Tensor m, v;     // Adam moments
  int step = 0;
  std::vector<LossRecord> trace;
};

// --- losses -----------------------------------------------------------------

/// Components of the thresholded map; K = 0 for an identically-zero map.
ComponentSet attention_components(const AttentionMap& map, double tau, int connectivity);

double distraction_loss(const AttentionMap& map, double tau, int connectivity);
/// map: [H, W] traced. The partition is computed from the current values and frozen.
Var distraction_loss(Graph& g, Var map, double tau, int connectivity);

double evasion_loss(const Tensor& t_adv, const Tensor& t0, const BinaryMap& edge, double beta);
Var evasion_loss(Graph& g, Var t_adv, const Tensor& t0, const BinaryMap& edge, double beta);

/// Sum of squared differences between horizontally and vertically adjacent pixels, all channels.
double smooth_loss(const Image& image);
/// image: [C, H, W] or [H, W].
Var smooth_loss(Var image);

double total_loss(double l_d, double l_e, double l_s, double lambda);

// --- optimizer ----------------------------------------------------------------

struct AdamParams {
  double lr = 0.01;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AttackState init_attack_state(const Tensor& t0);
/// Adam with bias correction; decay * (T - T0) is added to the gradient; result clamped to [0,1].
AttackState adam_step(const AttackState& state, const Tensor& gradient, const Tensor& t0, const AdamParams& p);

// --- attack loop --------------------------------------------------------------

struct AttackResult {
  TextureAtlas t0;
  TextureAtlas t_adv;
  Tensor t_adv_tensor;
  BinaryMap edge_map;   // Canny edges of the seed patch
  BinaryMap edge_mask;  // texture space
  std::vector<LossRecord> trace;
  std::vector<double> epoch_mean_distraction;
};

struct StepInfo {
  int epoch;
  int step;
  LossRecord loss;
};
using StepCallback = std::function<void(const StepInfo&)>;

/// Ψ: paints the seed patch into the texture; Φ: Canny on the patch; E: edge mask.
TextureAtlas seed_texture(const TextureAtlas& texture, const Image& patch, const AttackConfig& config);
BinaryMap seed_edge_map(const Image& patch, const AttackConfig& config);

AttackResult das_attack(const Mesh& mesh, const TextureAtlas& texture, const Image& seed_patch,
                        const std::vector<RenderCondition>& conditions, const std::vector<Image>& backgrounds,
                        const Classifier& attention_model, const AttackConfig& config,
                        const StepCallback& on_step = {});

}  // namespace das
