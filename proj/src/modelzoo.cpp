#include "das/modelzoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "das/parallel.hpp"
#include "das/rng.hpp"
#include "das/serialize.hpp"

namespace das {
namespace {

using nlohmann::json;

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

LayerKind kind_from(const std::string& s) {
  for (auto k : {LayerKind::conv, LayerKind::relu, LayerKind::maxpool, LayerKind::avgpool, LayerKind::global_avgpool,
                 LayerKind::dense})
    if (s == kind_name(k)) return k;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

bool has_params(LayerKind k) { return k == LayerKind::conv || k == LayerKind::dense; }

}  // namespace

// ---------------------------------------------------------------------------
// Scene

void Scene::validate() const {
  if (classes.size() < 3) throw std::invalid_argument("scene: at least 3 classes are required");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i].class_id != static_cast<int>(i)) throw std::invalid_argument("scene: class ids must be 0..C-1");
    classes[i].mesh.validate();
    if (classes[i].base_texture.width() != atlas_width() || classes[i].base_texture.height() != atlas_height())
      throw std::invalid_argument("scene: all base textures must share one atlas size");
  }
  if (backgrounds.empty()) throw std::invalid_argument("scene: no backgrounds");
  for (const auto& bg : backgrounds)
    if (bg.width != image_size || bg.height != image_size || bg.channels != 3)
      throw std::invalid_argument("scene: backgrounds must be RGB " + std::to_string(image_size) + "x" +
                                  std::to_string(image_size));
}

const Image& Scene::background(const RenderCondition& c) const {
  if (c.background_id < 0 || static_cast<std::size_t>(c.background_id) >= backgrounds.size())
    throw std::out_of_range("background_id " + std::to_string(c.background_id) + " out of range");
  return backgrounds[c.background_id];
}

Scene load_scene(const std::filesystem::path& dir, const std::vector<std::string>& class_names,
                 const std::vector<std::string>& background_files) {
  Scene scene;
  for (std::size_t i = 0; i < class_names.size(); ++i) {
    const auto& name = class_names[i];
    scene.classes.push_back({static_cast<int>(i), name, load_mesh(dir / "meshes" / (name + ".obj")),
                             TextureAtlas(read_png(dir / "textures" / (name + ".png")))});
  }
  for (const auto& f : background_files) scene.backgrounds.push_back(read_png(dir / "backgrounds" / f));
  if (!scene.backgrounds.empty()) scene.image_size = scene.backgrounds[0].width;
  scene.validate();
  return scene;
}

Scene load_default_scene(const std::filesystem::path& assets_dir) {
  return load_scene(assets_dir, {"car", "truck", "pod", "pyramid"}, {"bg0.png"});
}

Image render_view(const Scene& scene, int class_id, const RenderCondition& cond) {
  return render_view(scene, class_id, cond, scene.classes.at(class_id).base_texture);
}

Image render_view(const Scene& scene, int class_id, const RenderCondition& cond, const TextureAtlas& texture) {
  const auto& cls = scene.classes.at(class_id);
  const RenderMap map = bake_condition(cls.mesh, cond, scene.image_size, scene.image_size, texture.width(),
                                       texture.height());
  return render(map, texture, scene.background(cond));
}

// ---------------------------------------------------------------------------
// Conditions and datasets

std::vector<RenderCondition> condition_grid(const std::vector<double>& distances, const std::vector<double>& pitches,
                                            const std::vector<double>& yaws, const std::vector<double>& lights,
                                            const std::vector<int>& backgrounds) {
  if (distances.empty() || pitches.empty() || yaws.empty() || lights.empty() || backgrounds.empty())
    throw std::invalid_argument("condition_grid: every list must be non-empty");
  std::vector<RenderCondition> out;
  for (double d : distances)
    for (double p : pitches)
      for (double y : yaws)
        for (double l : lights)
          for (int b : backgrounds) {
            RenderCondition c{d, y, p, l, b};
            c.validate();
            out.push_back(c);
          }
  return out;
}

ConditionSplit split_conditions(const std::vector<RenderCondition>& conditions, std::uint64_t seed,
                                double test_fraction) {
  if (conditions.empty()) throw std::invalid_argument("split: empty condition list");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw std::invalid_argument("split: test_fraction must be in (0,1)");
  if (conditions.size() < 2) throw std::invalid_argument("split: need at least 2 conditions");
  const std::size_t n = conditions.size();
  const std::size_t n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 gen(seed);
  rng::shuffle(order, gen);
  std::vector<std::uint8_t> is_test(n, 0);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = 1;
  ConditionSplit s;
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? s.test : s.train).push_back(conditions[i]);
  return s;
}

Dataset generate_dataset(const Scene& scene, const std::vector<RenderCondition>& conditions, std::uint64_t split_seed,
                         double test_fraction) {
  scene.validate();
  if (conditions.empty()) throw std::invalid_argument("generate_dataset: empty condition list");
  Dataset data;
  data.split = split_conditions(conditions, split_seed, test_fraction);
  auto render_side = [&](const std::vector<RenderCondition>& conds) {
    const std::size_t nc = scene.classes.size();
    std::vector<Sample> out(conds.size() * nc);
    parallel_for(out.size(), [&](std::size_t i) {
      const auto& c = conds[i / nc];
      const int label = static_cast<int>(i % nc);
      out[i] = {label, c, render_view(scene, label, c)};
    });
    return out;
  };
  data.train = render_side(data.split.train);
  data.test = render_side(data.split.test);
  return data;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir / "images");
  json manifest = {{"train", json::array()}, {"test", json::array()}};
  auto dump = [&](const std::vector<Sample>& samples, const std::string& side) {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      const std::string rel = "images/" + side + "_" + std::to_string(i) + ".png";
      write_png(dir / rel, s.image);
      manifest[side].push_back({{"path", rel},
                                {"label", s.label},
                                {"distance", s.condition.distance},
                                {"yaw", s.condition.yaw},
                                {"pitch", s.condition.pitch},
                                {"light", s.condition.light},
                                {"background_id", s.condition.background_id}});
    }
  };
  dump(data.train, "train");
  dump(data.test, "test");
  std::ofstream os(dir / "manifest.json");
  os << manifest.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + (dir / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// Architectures

std::vector<Shape> ArchSpec::layer_shapes() const {
  if (input_size <= 0 || in_channels <= 0 || classes <= 0) throw std::invalid_argument(name + ": bad input spec");
  Shape cur{static_cast<std::size_t>(in_channels), static_cast<std::size_t>(input_size),
            static_cast<std::size_t>(input_size)};
  std::vector<Shape> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = name + ": layer " + std::to_string(i) + " (" + kind_name(l.kind) + ")";
    const bool spatial = cur.size() == 3;
    switch (l.kind) {
      case LayerKind::conv: {
        if (!spatial || l.out <= 0 || l.kernel <= 0 || l.stride <= 0 || l.pad < 0)
          throw std::invalid_argument(where + ": invalid");
        const Conv2dParams p{static_cast<std::size_t>(l.stride), static_cast<std::size_t>(l.pad)};
        const auto k = static_cast<std::size_t>(l.kernel);
        const std::size_t h = kernels::conv_out_dim(cur[1], k, p), w = kernels::conv_out_dim(cur[2], k, p);
        if (h == 0 || w == 0) throw std::invalid_argument(where + ": output would be empty");
        cur = {static_cast<std::size_t>(l.out), h, w};
        break;
      }
      case LayerKind::relu:
        break;
      case LayerKind::maxpool:
      case LayerKind::avgpool: {
        if (!spatial || l.kernel <= 0 || l.stride <= 0) throw std::invalid_argument(where + ": invalid");
        const auto k = static_cast<std::size_t>(l.kernel), s = static_cast<std::size_t>(l.stride);
        if (cur[1] < k || cur[2] < k) throw std::invalid_argument(where + ": window larger than input");
        cur = {cur[0], (cur[1] - k) / s + 1, (cur[2] - k) / s + 1};
        break;
      }
      case LayerKind::global_avgpool:
        if (!spatial || cur[1] != cur[2]) throw std::invalid_argument(where + ": needs square feature maps");
        cur = {cur[0]};
        break;
      case LayerKind::dense:
        if (spatial || l.out <= 0) throw std::invalid_argument(where + ": needs a flat input");
        cur = {static_cast<std::size_t>(l.out)};
        break;
    }
    out.push_back(cur);
  }
  if (out.empty() || out.back() != Shape{static_cast<std::size_t>(classes)})
    throw std::invalid_argument(name + ": output must be [" + std::to_string(classes) + "]");
  return out;
}

int ArchSpec::resolved_tap() const {
  if (tap >= 0) return tap;
  int last_conv = -1;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::conv) last_conv = static_cast<int>(i);
  if (last_conv < 0) return -1;
  if (last_conv + 1 < static_cast<int>(layers.size()) && layers[last_conv + 1].kind == LayerKind::relu)
    return last_conv + 1;
  return last_conv;
}

void ArchSpec::validate() const {
  const auto shapes = layer_shapes();
  const int t = resolved_tap();
  if (t < 0 || t >= static_cast<int>(layers.size())) throw std::invalid_argument(name + ": feature tap layer missing");
  const auto k = layers[t].kind;
  if (k == LayerKind::dense || k == LayerKind::global_avgpool || shapes[t].size() != 3)
    throw std::invalid_argument(name + ": feature tap must be a conv or pooling output");
}

std::vector<ArchSpec> default_architectures(int classes, int input_size) {
  using K = LayerKind;
  auto conv = [](int out, int k = 3, int s = 1) { return LayerSpec{K::conv, out, k, s, k / 2}; };
  const LayerSpec relu{K::relu};
  const LayerSpec maxpool{K::maxpool, 0, 2, 2, 0};
  const LayerSpec avgpool{K::avgpool, 0, 2, 2, 0};
  const LayerSpec gap{K::global_avgpool};
  const LayerSpec head{K::dense, classes};
  std::vector<ArchSpec> out;
  out.push_back({"compact3", input_size, 3, classes,
                 {conv(16, 3, 2), relu, maxpool, conv(32), relu, maxpool, conv(32), relu, gap, head}});
  out.push_back({"wide4", input_size, 3, classes,
                 {conv(16, 3, 2), relu, maxpool, conv(32), relu, maxpool, conv(48), relu, conv(64), relu, gap, head}});
  out.push_back({"deep5", input_size, 3, classes,
                 {conv(16, 3, 2), relu, maxpool, conv(24), relu, conv(32), relu, maxpool, conv(48), relu, conv(64),
                  relu, gap, head}});
  out.push_back({"avgpool4", input_size, 3, classes,
                 {conv(16, 5, 2), relu, avgpool, conv(32), relu, avgpool, conv(48), relu, conv(48), relu, gap, head}});
  for (auto& a : out) a.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

Classifier::Classifier(ArchSpec spec, std::vector<Tensor> params) : spec_(std::move(spec)), params_(std::move(params)) {
  spec_.validate();
  const auto shapes = spec_.layer_shapes();
  std::size_t pi = 0;
  Shape in{static_cast<std::size_t>(spec_.in_channels)};
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    if (has_params(l.kind)) {
      const std::size_t fan_in = in[0];
      const Shape ws = l.kind == LayerKind::conv
                           ? Shape{static_cast<std::size_t>(l.out), fan_in, static_cast<std::size_t>(l.kernel),
                                   static_cast<std::size_t>(l.kernel)}
                           : Shape{fan_in, static_cast<std::size_t>(l.out)};
      if (pi + 2 > params_.size()) throw std::invalid_argument(spec_.name + ": too few parameter tensors");
      if (params_[pi].shape() != ws) throw ShapeError("classifier param", params_[pi].shape(), ws);
      if (params_[pi + 1].shape() != Shape{static_cast<std::size_t>(l.out)})
        throw ShapeError("classifier bias", params_[pi + 1].shape(), Shape{static_cast<std::size_t>(l.out)});
      pi += 2;
    }
    in = shapes[i];
  }
  if (pi != params_.size()) throw std::invalid_argument(spec_.name + ": too many parameter tensors");
}

Classifier Classifier::initialize(const ArchSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto shapes = spec.layer_shapes();
  std::mt19937_64 gen(seed);
  std::vector<Tensor> params;
  std::size_t channels = static_cast<std::size_t>(spec.in_channels);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (has_params(l.kind)) {
      const auto out = static_cast<std::size_t>(l.out);
      const auto k = static_cast<std::size_t>(l.kernel);
      Shape ws = l.kind == LayerKind::conv ? Shape{out, channels, k, k} : Shape{channels, out};
      const double fan_in = l.kind == LayerKind::conv ? static_cast<double>(channels * k * k) : channels;
      const double std_dev = std::sqrt(2.0 / fan_in);
      std::vector<float> w(numel(ws));
      for (auto& v : w) v = static_cast<float>(rng::normal(gen) * std_dev);
      params.emplace_back(ws, std::move(w));
      params.push_back(Tensor::zeros({out}));
    }
    channels = shapes[i][0];
  }
  return Classifier(spec, std::move(params));
}

Classifier::Output Classifier::forward(Graph& g, Var images, bool trainable, std::vector<Var>* param_vars) const {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != static_cast<std::size_t>(spec_.in_channels) ||
      s[2] != static_cast<std::size_t>(spec_.input_size) || s[3] != static_cast<std::size_t>(spec_.input_size))
    throw ShapeError(spec_.name + " input", s,
                     Shape{0, static_cast<std::size_t>(spec_.in_channels), static_cast<std::size_t>(spec_.input_size),
                           static_cast<std::size_t>(spec_.input_size)});
  const std::size_t n = s[0];
  const int tap = spec_.resolved_tap();
  // Inputs are centered around zero.
  Var x = ag::add(images, g.constant(Tensor::full(s, -0.5f)));
  Var features{};
  std::size_t pi = 0;
  auto param = [&](std::size_t i) {
    Var v = trainable ? g.input(params_[i]) : g.constant(params_[i]);
    if (param_vars) param_vars->push_back(v);
    return v;
  };
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto& l = spec_.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const Var w = param(pi), b = param(pi + 1);
        pi += 2;
        x = ag::conv2d(x, w, b, {static_cast<std::size_t>(l.stride), static_cast<std::size_t>(l.pad)});
        break;
      }
      case LayerKind::relu:
        x = ag::relu(x);
        break;
      case LayerKind::maxpool:
        x = ag::max_pool2d(x, {static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.stride)});
        break;
      case LayerKind::avgpool:
        x = ag::avg_pool2d(x, {static_cast<std::size_t>(l.kernel), static_cast<std::size_t>(l.stride)});
        break;
      case LayerKind::global_avgpool: {
        const std::size_t hw = x.shape()[2];
        x = ag::reshape(ag::avg_pool2d(x, {hw, hw}), {n, x.shape()[1]});
        break;
      }
      case LayerKind::dense: {
        const Var w = param(pi), b = param(pi + 1);
        pi += 2;
        const Shape out{n, static_cast<std::size_t>(l.out)};
        x = ag::add(ag::matmul(x, w), ag::broadcast_to(ag::reshape(b, {1, out[1]}), out));
        break;
      }
    }
    if (static_cast<int>(i) == tap) features = x;
  }
  return {x, features};
}

Tensor Classifier::logits(const Tensor& images) const {
  Graph g(Tracing::off);
  return forward(g, g.constant(images)).logits.value();
}

void Classifier::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json layers = json::array();
  for (const auto& l : spec_.layers)
    layers.push_back({{"kind", kind_name(l.kind)}, {"out", l.out}, {"kernel", l.kernel}, {"stride", l.stride},
                      {"pad", l.pad}});
  json params = json::array();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string file = "param_" + std::to_string(i) + ".dast";
    save_dast(dir / file, params_[i]);
    params.push_back(file);
  }
  const json doc = {{"name", spec_.name},       {"input_size", spec_.input_size}, {"in_channels", spec_.in_channels},
                    {"classes", spec_.classes}, {"tap", spec_.resolved_tap()},   {"layers", layers},
                    {"params", params}};
  std::ofstream os(dir / "model.json");
  os << doc.dump(2) << '\n';
  if (!os) throw std::runtime_error("write failed: " + (dir / "model.json").string());
}

Classifier Classifier::load(const std::filesystem::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw std::runtime_error("cannot open model descriptor: " + (dir / "model.json").string());
  json doc;
  try {
    doc = json::parse(is);
    ArchSpec spec;
    spec.name = doc.at("name").get<std::string>();
    spec.input_size = doc.at("input_size").get<int>();
    spec.in_channels = doc.at("in_channels").get<int>();
    spec.classes = doc.at("classes").get<int>();
    spec.tap = doc.at("tap").get<int>();
    for (const auto& l : doc.at("layers"))
      spec.layers.push_back({kind_from(l.at("kind").get<std::string>()), l.at("out").get<int>(),
                             l.at("kernel").get<int>(), l.at("stride").get<int>(), l.at("pad").get<int>()});
    std::vector<Tensor> params;
    for (const auto& f : doc.at("params")) params.push_back(load_dast(dir / f.get<std::string>()));
    return Classifier(std::move(spec), std::move(params));
  } catch (const json::exception& e) {
    throw std::runtime_error("bad model descriptor " + (dir / "model.json").string() + ": " + e.what());
  }
}

Tensor stack_images(const std::vector<const Image*>& images) {
  if (images.empty()) throw std::invalid_argument("stack_images: no images");
  const Image& first = *images[0];
  std::vector<float> data;
  data.reserve(images.size() * first.pixels.size());
  for (const Image* img : images) {
    if (img->width != first.width || img->height != first.height || img->channels != first.channels)
      throw std::invalid_argument("stack_images: images differ in size");
    data.insert(data.end(), img->pixels.begin(), img->pixels.end());
  }
  return Tensor({images.size(), static_cast<std::size_t>(first.channels), static_cast<std::size_t>(first.height),
                 static_cast<std::size_t>(first.width)},
                std::move(data));
}

std::vector<float> predict(const Classifier& model, const Image& image) {
  if (image.width != model.input_size() || image.height != model.input_size())
    throw std::invalid_argument("predict: image is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + ", model expects " +
                                std::to_string(model.input_size()));
  return ops::softmax(model.logits(stack_images({&image}))).to_vector();
}

int predict_label(const Classifier& model, const Image& image) {
  const auto p = predict(model, image);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

double accuracy(const Classifier& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("accuracy: empty sample set");
  std::vector<int> hit(samples.size(), 0);
  parallel_for(samples.size(), [&](std::size_t i) { hit[i] = predict_label(model, samples[i].image) == samples[i].label; });
  return static_cast<double>(std::accumulate(hit.begin(), hit.end(), 0)) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Training

Classifier train(const ArchSpec& spec, const std::vector<Sample>& train_set, const TrainOptions& opt, TrainLog* log,
                 const EpochCallback& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  if (opt.epochs < 1 || opt.batch < 1 || !(opt.lr > 0.0) || !(opt.clip_norm >= 0.0)) throw std::invalid_argument("train: invalid options");
  Classifier model = Classifier::initialize(spec, opt.seed);
  std::vector<Tensor> params = model.params();
  std::vector<std::vector<float>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.size(), 0.0f);
  std::mt19937_64 gen(opt.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    rng::shuffle(order, gen);
    // Jittered views for this epoch, drawn in sample order so the draw sequence is fixed.
    std::vector<Image> jittered;
    if (opt.jitter_scene) {
      std::vector<RenderCondition> conds(train_set.size());
      for (std::size_t i = 0; i < train_set.size(); ++i) {
        RenderCondition c = train_set[i].condition;
        c.yaw = std::fmod(c.yaw + (rng::unit(gen) * 10.0 - 5.0) + 360.0, 360.0);
        c.pitch = std::clamp(c.pitch + (rng::unit(gen) * 10.0 - 5.0), 0.0, 90.0);
        c.light = c.light * (0.9 + 0.2 * rng::unit(gen));
        conds[i] = c;
      }
      jittered.resize(train_set.size());
      parallel_for(train_set.size(), [&](std::size_t i) {
        jittered[i] = render_view(*opt.jitter_scene, train_set[i].label, conds[i]);
      });
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opt.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch));
      std::vector<const Image*> imgs;
      std::vector<int> labels;
      for (std::size_t j = start; j < end; ++j) {
        const std::size_t i = order[j];
        imgs.push_back(opt.jitter_scene ? &jittered[i] : &train_set[i].image);
        labels.push_back(train_set[i].label);
      }
      const Classifier current(model.spec(), params);
      Graph g;
      std::vector<Var> pv;
      const auto out = current.forward(g, g.constant(stack_images(imgs)), true, &pv);
      const Var loss = ag::softmax_cross_entropy(out.logits, labels);
      const double lv = loss.value().item();
      if (!std::isfinite(lv))
        throw std::runtime_error("training diverged (loss is not finite) at epoch " + std::to_string(epoch + 1) +
                                 "; lower the learning rate");
      loss_sum += lv * static_cast<double>(labels.size());
      const Tensor& logits = out.logits.value();
      const std::size_t nc = logits.dim(1);
      for (std::size_t r = 0; r < labels.size(); ++r) {
        const float* row = logits.data().data() + r * nc;
        if (static_cast<int>(std::max_element(row, row + nc) - row) == labels[r]) ++correct;
      }
      const Gradients grads = backward(g, loss);
      std::vector<Tensor> gs;
      double sq = 0.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        gs.push_back(grads[pv[k]]);
        for (float v : gs.back().data()) sq += static_cast<double>(v) * v;
      }
      const double norm = std::sqrt(sq);
      const double scale = opt.clip_norm > 0.0 && norm > opt.clip_norm ? opt.clip_norm / norm : 1.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        std::vector<float> next = params[k].to_vector();
        auto& vel = velocity[k];
        const auto gd = gs[k].data();
        for (std::size_t e = 0; e < next.size(); ++e) {
          vel[e] = static_cast<float>(opt.momentum * vel[e] + scale * gd[e]);
          next[e] = static_cast<float>(next[e] - opt.lr * vel[e]);
        }
        params[k] = Tensor(params[k].shape(), std::move(next));
      }
    }
    const double mean_loss = loss_sum / static_cast<double>(train_set.size());
    const double acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!std::isfinite(mean_loss))
      throw std::runtime_error("training diverged (loss is not finite); lower the learning rate");
    if (log) {
      log->epoch_loss.push_back(mean_loss);
      log->epoch_accuracy.push_back(acc);
    }
    if (on_epoch) on_epoch(epoch + 1, mean_loss, acc);
    model = Classifier(model.spec(), params);
  }
  return Classifier(spec, params);
}

}  // namespace das
