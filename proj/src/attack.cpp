#include "das/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "das/parallel.hpp"
#include "das/rng.hpp"

namespace das {
namespace {

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument("attack config: " + field + " " + what);
}

// Per-texel evasion weight (beta * E + 1), broadcast over the 3 channels.
Tensor evasion_weights(const Shape& shape, const BinaryMap& edge, double beta) {
  if (shape.size() != 3 || shape[1] != static_cast<std::size_t>(edge.height) ||
      shape[2] != static_cast<std::size_t>(edge.width))
    throw ShapeError("evasion_loss", shape, Shape{3, static_cast<std::size_t>(edge.height),
                                                  static_cast<std::size_t>(edge.width)});
  const std::size_t plane = edge.bits.size();
  std::vector<float> w(shape[0] * plane);
  for (std::size_t c = 0; c < shape[0]; ++c)
    for (std::size_t i = 0; i < plane; ++i) w[c * plane + i] = static_cast<float>(beta * edge.bits[i] + 1.0);
  return Tensor(shape, std::move(w));
}

// Frozen coefficient per pixel: 1 / (K * max(N - N_k, 1)) inside component k, 0 elsewhere.
std::vector<double> distraction_coefficients(const ComponentSet& cs) {
  std::vector<double> coef(cs.labels.size(), 0.0);
  if (cs.count == 0) return coef;
  const double n = static_cast<double>(cs.labels.size());
  std::vector<double> per(cs.count + 1, 0.0);
  for (int k = 1; k <= cs.count; ++k)
    per[k] = 1.0 / (cs.count * std::max(n - static_cast<double>(cs.sizes[k - 1]), 1.0));
  for (std::size_t i = 0; i < coef.size(); ++i) coef[i] = per[cs.labels[i]];
  return coef;
}

AttentionMap map_from_values(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("distraction_loss", t.shape(), "expected [H, W]");
  AttentionMap m;
  m.height = static_cast<int>(t.dim(0));
  m.width = static_cast<int>(t.dim(1));
  m.values = t.to_vector();
  return m;
}

}  // namespace

void AttackConfig::validate(std::size_t condition_count, int class_count) const {
  require(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be >= 0");
  require(std::isfinite(beta) && beta >= 0.0, "beta", "must be >= 0");
  require(tau > 0.0 && tau < 1.0, "tau", "must be in (0,1)");
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be > 0");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(minibatch >= 1 && static_cast<std::size_t>(minibatch) <= std::max<std::size_t>(condition_count, 1),
          "minibatch", "must be in [1, number of conditions]");
  require(connectivity == 4 || connectivity == 8, "connectivity", "must be 4 or 8");
  require(target_label >= 0 && target_label < class_count, "target_label", "is not a valid class id");
  require(std::isfinite(smooth_weight) && smooth_weight >= 0.0, "smooth_weight", "must be >= 0");
  require(edge_dilate == 0 || edge_dilate == 1, "edge_dilate", "must be 0 or 1");
  require(canny.low < canny.high, "canny", "low must be below high");
  try {
    texel_footprint(patch_region, 1024, 1024);
  } catch (const std::invalid_argument& e) {
    require(false, "patch_region", e.what());
  }
}

ComponentSet attention_components(const AttentionMap& map, double tau, int connectivity) {
  BinaryMap mask(map.width, map.height);
  const float peak = map.values.empty() ? 0.0f : *std::max_element(map.values.begin(), map.values.end());
  if (peak > 0.0f) {
    const double thr = tau * peak;
    for (std::size_t i = 0; i < map.values.size(); ++i) mask.bits[i] = map.values[i] > 0.0f && map.values[i] >= thr;
  }
  Image values(map.width, map.height, 1);
  values.pixels = map.values;
  return connected_components(mask, values, connectivity);
}

double distraction_loss(const AttentionMap& map, double tau, int connectivity) {
  const ComponentSet cs = attention_components(map, tau, connectivity);
  if (cs.count == 0) return 0.0;
  const double n = static_cast<double>(map.values.size());
  double acc = 0.0;
  for (int k = 0; k < cs.count; ++k) acc += cs.sums[k] / std::max(n - static_cast<double>(cs.sizes[k]), 1.0);
  return acc / cs.count;
}

Var distraction_loss(Graph& g, Var map, double tau, int connectivity) {
  const ComponentSet cs = attention_components(map_from_values(map.value()), tau, connectivity);
  const auto coef = distraction_coefficients(cs);
  std::vector<float> cf(coef.begin(), coef.end());
  return ag::sum(ag::mul(map, g.constant(Tensor(map.shape(), std::move(cf)))));
}

double evasion_loss(const Tensor& t_adv, const Tensor& t0, const BinaryMap& edge, double beta) {
  if (t_adv.shape() != t0.shape()) throw ShapeError("evasion_loss", t_adv.shape(), t0.shape());
  const Tensor w = evasion_weights(t_adv.shape(), edge, beta);
  double acc = 0.0;
  for (std::size_t i = 0; i < t_adv.size(); ++i) {
    const double d = static_cast<double>(w[i]) * (static_cast<double>(t_adv[i]) - t0[i]);
    acc += d * d;
  }
  return acc;
}

Var evasion_loss(Graph& g, Var t_adv, const Tensor& t0, const BinaryMap& edge, double beta) {
  if (t_adv.shape() != t0.shape()) throw ShapeError("evasion_loss", t_adv.shape(), t0.shape());
  const Tensor w = evasion_weights(t0.shape(), edge, beta);
  return ag::sum(ag::square(ag::mul(g.constant(w), ag::sub(t_adv, g.constant(t0)))));
}

double smooth_loss(const Image& img) {
  double acc = 0.0;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const double v = img.at(c, y, x);
        if (x + 1 < img.width) acc += (v - img.at(c, y, x + 1)) * (v - img.at(c, y, x + 1));
        if (y + 1 < img.height) acc += (v - img.at(c, y + 1, x)) * (v - img.at(c, y + 1, x));
      }
  return acc;
}

Var smooth_loss(Var image) {
  const Shape& s = image.shape();
  if (s.size() != 2 && s.size() != 3) throw ShapeError("smooth_loss", s, "expected [C,H,W] or [H,W]");
  const std::size_t ya = s.size() - 2, xa = s.size() - 1;
  const std::size_t h = s[ya], w = s[xa];
  Var total{};
  bool any = false;
  auto add = [&](Var term) {
    total = any ? ag::add(total, term) : term;
    any = true;
  };
  if (w > 1) add(ag::sum(ag::square(ag::sub(ag::slice(image, xa, 1, w), ag::slice(image, xa, 0, w - 1)))));
  if (h > 1) add(ag::sum(ag::square(ag::sub(ag::slice(image, ya, 1, h), ag::slice(image, ya, 0, h - 1)))));
  if (!any) return ag::scalar_mul(ag::sum(image), 0.0f);
  return total;
}

double total_loss(double l_d, double l_e, double l_s, double lambda) { return l_d + lambda * l_e + l_s; }

AttackState init_attack_state(const Tensor& t0) {
  return {t0, Tensor::zeros(t0.shape()), Tensor::zeros(t0.shape()), 0, {}};
}

AttackState adam_step(const AttackState& s, const Tensor& gradient, const Tensor& t0, const AdamParams& p) {
  if (gradient.shape() != s.texture.shape()) throw ShapeError("adam_step", gradient.shape(), s.texture.shape());
  if (t0.shape() != s.texture.shape()) throw ShapeError("adam_step", t0.shape(), s.texture.shape());
  if (!all_finite(gradient))
    throw std::runtime_error("non-finite gradient at step " + std::to_string(s.step + 1));
  const int t = s.step + 1;
  const double c1 = 1.0 - std::pow(p.beta1, t), c2 = 1.0 - std::pow(p.beta2, t);
  const std::size_t n = gradient.size();
  std::vector<float> tex(n), m(n), v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double cur = s.texture[i];
    const double g = static_cast<double>(gradient[i]) + p.weight_decay * (cur - t0[i]);
    const double mi = p.beta1 * s.m[i] + (1.0 - p.beta1) * g;
    const double vi = p.beta2 * s.v[i] + (1.0 - p.beta2) * g * g;
    const double update = p.lr * (mi / c1) / (std::sqrt(vi / c2) + p.eps);
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    tex[i] = static_cast<float>(std::clamp(cur - update, 0.0, 1.0));
  }
  AttackState out;
  out.texture = Tensor(s.texture.shape(), std::move(tex));
  out.m = Tensor(s.texture.shape(), std::move(m));
  out.v = Tensor(s.texture.shape(), std::move(v));
  out.step = t;
  out.trace = s.trace;
  return out;
}

TextureAtlas seed_texture(const TextureAtlas& texture, const Image& patch, const AttackConfig& config) {
  return paste_patch(patch, texture, config.patch_region);
}

BinaryMap seed_edge_map(const Image& patch, const AttackConfig& config) {
  return canny(patch.channels == 1 ? patch : to_gray(patch), config.canny);
}

AttackResult das_attack(const Mesh& mesh, const TextureAtlas& texture, const Image& seed_patch,
                        const std::vector<RenderCondition>& conditions, const std::vector<Image>& backgrounds,
                        const Classifier& model, const AttackConfig& config, const StepCallback& on_step) {
  if (conditions.empty()) throw std::invalid_argument("das_attack: empty condition set");
  config.validate(conditions.size(), model.classes());

  AttackResult result;
  result.t0 = seed_texture(texture, seed_patch, config);
  result.edge_map = seed_edge_map(seed_patch, config);
  result.edge_mask = mask_to_texture_space(result.edge_map, texture.width(), texture.height(), config.patch_region,
                                           config.edge_dilate);
  const Tensor t0 = result.t0.tensor();

  // Geometry is fixed per condition: bake every render operator once.
  std::vector<std::unique_ptr<RenderOperator>> ops(conditions.size());
  parallel_for(conditions.size(), [&](std::size_t i) {
    const auto& c = conditions[i];
    if (c.background_id < 0 || static_cast<std::size_t>(c.background_id) >= backgrounds.size())
      throw std::out_of_range("das_attack: background_id out of range");
    const RenderMap map = bake_condition(mesh, c, model.input_size(), model.input_size(), texture.width(),
                                         texture.height());
    ops[i] = std::make_unique<RenderOperator>(map, backgrounds[c.background_id]);
  });

  const AdamParams adam{config.lr, config.weight_decay};
  AttackState state = init_attack_state(t0);
  std::mt19937_64 gen(config.seed);
  std::vector<std::size_t> order(conditions.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(config.minibatch);
  const bool per_view = config.terms.distraction || config.terms.smooth;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng::shuffle(order, gen);
    double epoch_ld = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += mb) {
      const std::size_t end = std::min(order.size(), start + mb);
      const std::size_t b = end - start;
      std::vector<Tensor> grads(b);
      std::vector<double> ld(b, 0.0), ls(b, 0.0);
      if (per_view) {
        parallel_for(b, [&](std::size_t j) {
          Graph g;
          const Var t = g.input(state.texture);
          const Var img = ops[order[start + j]]->apply(t);
          const float inv_b = 1.0f / static_cast<float>(b);
          Var root{};
          bool have = false;
          auto add = [&](Var term) {
            root = have ? ag::add(root, term) : term;
            have = true;
          };
          if (config.terms.distraction) {
            const TracedAttention att = attention_traced(model, g, img, config.target_label, config.variant);
            const Var d = distraction_loss(g, att.map, config.tau, config.connectivity);
            ld[j] = d.value().item();
            if (g.requires_grad(d.id)) add(ag::scalar_mul(d, inv_b));
          }
          if (config.terms.smooth) {
            const Var s = smooth_loss(img);
            ls[j] = s.value().item();
            add(ag::scalar_mul(s, static_cast<float>(config.smooth_weight) * inv_b));
          }
          grads[j] = have && g.requires_grad(root.id) ? backward(g, root)[t] : Tensor::zeros(state.texture.shape());
        });
      }
      // Fixed-order reduction keeps the result independent of scheduling.
      std::vector<double> total(state.texture.size(), 0.0);
      for (const auto& gj : grads) {
        if (gj.size() == 0) continue;
        const auto d = gj.data();
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += d[i];
      }
      LossRecord rec;
      rec.distraction = std::accumulate(ld.begin(), ld.end(), 0.0) / static_cast<double>(b);
      rec.smooth = std::accumulate(ls.begin(), ls.end(), 0.0) / static_cast<double>(b);
      rec.evasion = evasion_loss(state.texture, t0, result.edge_mask, config.beta);
      if (config.terms.evasion && config.lambda > 0.0) {
        Graph g;
        const Var t = g.input(state.texture);
        const Tensor ge = backward(g, evasion_loss(g, t, t0, result.edge_mask, config.beta))[t];
        const auto d = ge.data();
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += config.lambda * d[i];
      }
      rec.total = (config.terms.distraction ? rec.distraction : 0.0) +
                  (config.terms.evasion ? config.lambda * rec.evasion : 0.0) +
                  (config.terms.smooth ? config.smooth_weight * rec.smooth : 0.0);
      std::vector<float> gf(total.begin(), total.end());
      AttackState next = adam_step(state, Tensor(state.texture.shape(), std::move(gf)), t0, adam);
      next.trace.push_back(rec);
      state = std::move(next);
      epoch_ld += rec.distraction;
      ++batches;
      if (on_step) on_step({epoch, state.step, rec});
    }
    result.epoch_mean_distraction.push_back(epoch_ld / static_cast<double>(batches));
  }
  result.trace = std::move(state.trace);
  result.t_adv_tensor = state.texture;
  result.t_adv = TextureAtlas::from_tensor(state.texture);
  return result;
}

}  // namespace das
