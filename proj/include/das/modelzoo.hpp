#pragma once

// Scene registry, condition grid, dataset generation and the small CNN
// classifiers that serve as attack targets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "das/autodiff.hpp"
#include "das/image.hpp"
#include "das/render.hpp"

namespace das {

struct SceneClass {
  int class_id = 0;
  std::string name;
  Mesh mesh;
  TextureAtlas base_texture;
};

struct Scene {
  std::vector<SceneClass> classes;  // class_id == index
  std::vector<Image> backgrounds;   // indexed by RenderCondition::background_id
  int image_size = 96;

  /// Class ids contiguous from 0, at least 3 classes, backgrounds sized image_size.
  void validate() const;
  const Image& background(const RenderCondition& c) const;
  int atlas_width() const { return classes.at(0).base_texture.width(); }
  int atlas_height() const { return classes.at(0).base_texture.height(); }
};

/// Reads the shipped layout: meshes/<name>.obj, textures/<name>.png, backgrounds/bg<i>.png.
Scene load_scene(const std::filesystem::path& assets_dir, const std::vector<std::string>& class_names,
                 const std::vector<std::string>& background_files);
Scene load_default_scene(const std::filesystem::path& assets_dir);

Image render_view(const Scene& scene, int class_id, const RenderCondition& cond);
Image render_view(const Scene& scene, int class_id, const RenderCondition& cond, const TextureAtlas& texture);

/// Cartesian product, ordered distance-major then pitch, yaw, light, background.
std::vector<RenderCondition> condition_grid(const std::vector<double>& distances, const std::vector<double>& pitches,
                                            const std::vector<double>& yaws, const std::vector<double>& lights,
                                            const std::vector<int>& backgrounds);

struct ConditionSplit {
  std::vector<RenderCondition> train;
  std::vector<RenderCondition> test;
};
/// round(test_fraction * n) conditions (at least 1, at most n-1) go to test; both
/// sides keep grid order. Uses a seeded Fisher-Yates over mt19937_64.
ConditionSplit split_conditions(const std::vector<RenderCondition>& conditions, std::uint64_t seed,
                                double test_fraction);

struct Sample {
  int label = 0;
  RenderCondition condition;
  Image image;
};

struct Dataset {
  ConditionSplit split;
  std::vector<Sample> train;  // condition-major, then class
  std::vector<Sample> test;
};

Dataset generate_dataset(const Scene& scene, const std::vector<RenderCondition>& conditions,
                         std::uint64_t split_seed, double test_fraction);

/// Writes PNGs plus manifest.json (paths relative to dir).
void save_dataset(const std::filesystem::path& dir, const Dataset& data);

// ---------------------------------------------------------------------------
// Classifiers

enum class LayerKind { conv, relu, maxpool, avgpool, global_avgpool, dense };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int out = 0;     // conv channels / dense units
  int kernel = 3;  // conv and pooling window
  int stride = 1;
  int pad = 0;
};

struct ArchSpec {
  std::string name;
  int input_size = 96;
  int in_channels = 3;
  int classes = 4;
  std::vector<LayerSpec> layers;
  int tap = -1;  // layer whose output supplies the attention feature maps; -1 = last conv block

  /// Output shape [C,H,W] or [units] after each layer. Throws on an invalid chain.
  std::vector<Shape> layer_shapes() const;
  int resolved_tap() const;
  void validate() const;
};

/// Four shipped architectures of different depth, width and pooling.
std::vector<ArchSpec> default_architectures(int classes = 4, int input_size = 96);

class Classifier {
 public:
  Classifier() = default;
  Classifier(ArchSpec spec, std::vector<Tensor> params);
  /// He-normal weights, zero biases.
  static Classifier initialize(const ArchSpec& spec, std::uint64_t seed);

  struct Output {
    Var logits;    // [N, classes]
    Var features;  // [N, K, h, w] at the tap
  };

  /// images: [N, C, H, W] in [0,1]. Parameters enter the graph as inputs
  /// (trainable) or constants.
  Output forward(Graph& g, Var images, bool trainable_params = false,
                 std::vector<Var>* param_vars = nullptr) const;
  /// Untraced logits for a batch.
  Tensor logits(const Tensor& images) const;

  const ArchSpec& spec() const { return spec_; }
  const std::vector<Tensor>& params() const { return params_; }
  int classes() const { return spec_.classes; }
  int input_size() const { return spec_.input_size; }

  void save(const std::filesystem::path& dir) const;
  static Classifier load(const std::filesystem::path& dir);

 private:
  ArchSpec spec_;
  std::vector<Tensor> params_;  // weight, bias per conv/dense layer in order
};

/// Softmax scores for one image.
std::vector<float> predict(const Classifier& model, const Image& image);
int predict_label(const Classifier& model, const Image& image);
double accuracy(const Classifier& model, const std::vector<Sample>& samples);
Tensor stack_images(const std::vector<const Image*>& images);

struct TrainOptions {
  int epochs = 20;
  double lr = 0.02;
  double momentum = 0.9;
  int batch = 16;
  std::uint64_t seed = 1;
  /// Global gradient-norm clip per step; 0 disables.
  double clip_norm = 1.0;
  /// When set, every epoch re-renders each training sample under a jittered
  /// condition (yaw/pitch +-5 degrees, light +-10%).
  const Scene* jitter_scene = nullptr;
};

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
};

using EpochCallback = std::function<void(int epoch, double loss, double acc)>;

Classifier train(const ArchSpec& spec, const std::vector<Sample>& train_set, const TrainOptions& options,
                 TrainLog* log = nullptr, const EpochCallback& on_epoch = {});

}  // namespace das
