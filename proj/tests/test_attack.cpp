#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "das/attack.hpp"
#include "das/parallel.hpp"
#include "das/scene.hpp"
#include "loss_cases.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace das;
using namespace das::testing;

namespace {

AttentionMap make_map(int w, int h, std::vector<float> values) { return {w, h, std::move(values), false}; }

ArchSpec tiny_spec() {
  using K = LayerKind;
  ArchSpec s{"tiny", 24, 3, 4, {}};
  s.layers = {{K::conv, 6, 3, 2, 1}, {K::relu}, {K::conv, 8, 3, 1, 1}, {K::relu}, {K::global_avgpool}, {K::dense, 4}};
  return s;
}

struct AttackFixture {
  Mesh mesh = load_mesh(std::filesystem::path(DAS_ASSETS_DIR) / "meshes" / "car.obj");
  TextureAtlas texture{bilinear_resize(read_png(std::filesystem::path(DAS_ASSETS_DIR) / "textures" / "car.png"), 64, 64)};
  Image patch = make_seed_patch(16);
  std::vector<RenderCondition> conds = condition_grid({7, 9}, {30}, {0, 90, 180}, {1.0}, {0});
  std::vector<Image> backgrounds{make_background(24, 24, 0)};
  Classifier model = Classifier::initialize(tiny_spec(), 3);

  AttackConfig config() const {
    AttackConfig c;
    c.epochs = 2;
    c.minibatch = 4;
    return c;
  }
};

}  // namespace

TEST_CASE("distraction loss: analytic cases") {
  std::vector<float> v(100, 0.0f);
  CHECK(distraction_loss(make_map(10, 10, v), 0.5, 4) == 0.0);
  v[55] = 1.0f;
  CHECK(distraction_loss(make_map(10, 10, v), 0.5, 4) == doctest::Approx(1.0 / 99).epsilon(1e-12));
  // Two diagonal neighbours: separate under 4-connectivity, one blob under 8.
  v[66] = 1.0f;
  CHECK(distraction_loss(make_map(10, 10, v), 0.5, 4) == doctest::Approx(1.0 / 99).epsilon(1e-12));
  CHECK(distraction_loss(make_map(10, 10, v), 0.5, 8) == doctest::Approx(2.0 / 98).epsilon(1e-12));
  // Values below the threshold do not count.
  v[0] = 0.49f;
  CHECK(distraction_loss(make_map(10, 10, v), 0.5, 4) == doctest::Approx(1.0 / 99).epsilon(1e-12));
  // A single component covering the whole map uses the max(., 1) guard.
  CHECK(distraction_loss(make_map(2, 2, {1, 1, 1, 1}), 0.5, 4) == doctest::Approx(4.0));
}

TEST_CASE("distraction loss matches a brute-force flood fill on random maps") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::bernoulli_distribution zero(0.3), quantize(0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> v(144);
    const bool q = quantize(rng);
    for (auto& x : v) {
      x = zero(rng) ? 0.0f : u(rng);
      if (q) x = std::round(x * 4.0f) / 4.0f;  // ties at the threshold
    }
    const int conn = trial % 2 == 0 ? 4 : 8;
    const double tau = 0.2 + 0.6 * u(rng);
    const double got = distraction_loss(make_map(12, 12, v), tau, conn);
    const double want = brute_force_distraction(v, 12, 12, tau, conn);
    worst = std::max(worst, std::abs(got - want));
    Graph g;
    const Var traced = distraction_loss(g, g.input(Tensor({12, 12}, v)), tau, conn);
    CHECK(traced.value().item() == doctest::Approx(want).epsilon(1e-5));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("evasion loss: analytic cases") {
  const float d = 0.1f;
  const Tensor t0 = Tensor::full({3, 4, 4}, 0.5f);
  BinaryMap edge(4, 4);
  edge.at(1, 2) = 1;
  std::vector<float> off = t0.to_vector(), on = t0.to_vector();
  off[0] += d;           // channel 0, (0,0): not an edge texel
  on[16 + 4 + 2] += d;   // channel 1, (1,2): edge texel
  CHECK(evasion_loss(t0, t0, edge, 8.0) == 0.0);
  CHECK(evasion_loss(Tensor(t0.shape(), off), t0, edge, 8.0) == doctest::Approx(double(d) * d).epsilon(1e-6));
  CHECK(evasion_loss(Tensor(t0.shape(), on), t0, edge, 8.0) == doctest::Approx(81.0 * d * d).epsilon(1e-6));
  Graph g;
  CHECK(evasion_loss(g, g.input(Tensor(t0.shape(), on)), t0, edge, 8.0).value().item() ==
        doctest::Approx(81.0 * d * d).epsilon(1e-5));
  CHECK_THROWS_AS(evasion_loss(Tensor::zeros({3, 4, 5}), t0, edge, 8.0), ShapeError);
}

TEST_CASE("smooth loss: analytic cases") {
  Image ramp(2, 1, 1);
  ramp.pixels = {0.0f, 1.0f};
  CHECK(smooth_loss(ramp) == doctest::Approx(1.0));
  Image checker(2, 2, 1);
  checker.pixels = {0.0f, 1.0f, 1.0f, 0.0f};
  CHECK(smooth_loss(checker) == doctest::Approx(4.0));
  CHECK(smooth_loss(Image(5, 5, 3, 0.3f)) == 0.0);
  std::mt19937 rng(2);
  for (int i = 0; i < 10; ++i) {
    const Tensor t = random_tensor({3, 7, 5}, rng, 0.0f, 1.0f);
    Graph g;
    CHECK(smooth_loss(g.input(t)).value().item() == doctest::Approx(smooth_loss(Image::from_tensor(t))).epsilon(1e-5));
  }
}

TEST_CASE("total loss combines the terms") {
  CHECK(total_loss(1, 2, 3, 1e-5) == doctest::Approx(4.00002).epsilon(1e-12));
  CHECK(total_loss(0.5, 100, 0, 0) == 0.5);
}

TEST_CASE("loss and renderer gradients match finite differences") {
  for (const auto& c : loss_grad_cases()) {
    std::mt19937 rng(5);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) worst = std::max(worst, c.run(rng));
    INFO(c.name << " worst relative error " << worst);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("adam: fixed point, first step, convergence, errors") {
  const Tensor t0 = Tensor::full({3, 2, 2}, 0.5f);
  const AdamParams p{0.01, 1e-4};

  const AttackState still = adam_step(init_attack_state(t0), Tensor::zeros(t0.shape()), t0, p);
  CHECK(still.texture == t0);
  CHECK(still.step == 1);

  std::mt19937 rng(3);
  const Tensor g = signed_tensor(t0.shape(), rng, 0.01f, 5.0f);
  const AttackState first = adam_step(init_attack_state(t0), g, t0, p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double moved = first.texture[i] - t0[i];
    CHECK(std::abs(moved) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK((moved < 0) == (g[i] > 0));
  }

  // Quadratic bowl sum (T - c)^2 inside [0,1].
  const Tensor c = random_tensor(t0.shape(), rng, 0.2f, 0.8f);
  AttackState s = init_attack_state(t0);
  const AdamParams fast{0.05, 0.0};
  auto bowl = [&](const Tensor& t) {
    double acc = 0;
    for (std::size_t i = 0; i < t.size(); ++i) acc += (t[i] - c[i]) * (t[i] - c[i]);
    return acc;
  };
  const double start = bowl(s.texture);
  for (int k = 0; k < 50; ++k) s = adam_step(s, ops::scalar_mul(ops::sub(s.texture, c), 2.0f), t0, fast);
  CHECK(bowl(s.texture) < 0.01 * start);

  // Clamping to the valid texture range.
  AttackState edge = init_attack_state(Tensor::full({1, 1, 1}, 0.995f));
  edge = adam_step(edge, Tensor::full({1, 1, 1}, -1.0f), edge.texture, p);
  CHECK(edge.texture[0] == 1.0f);

  std::vector<float> bad(t0.size(), 0.0f);
  bad[3] = std::nanf("");
  CHECK_THROWS_WITH(adam_step(first, Tensor(t0.shape(), bad), t0, p), "non-finite gradient at step 2");
  CHECK_THROWS_AS(adam_step(first, Tensor::zeros({3}), t0, p), ShapeError);
}

TEST_CASE("attack config validation names the field") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate(10, 4));
  auto fails = [](AttackConfig bad, const char* field) {
    try {
      bad.validate(10, 4);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what()).find(field) != std::string::npos;
    }
    return false;
  };
  c = {};  c.lambda = -1;        CHECK(fails(c, "lambda"));
  c = {};  c.beta = -0.1;        CHECK(fails(c, "beta"));
  c = {};  c.tau = 1.0;          CHECK(fails(c, "tau"));
  c = {};  c.tau = 0.0;          CHECK(fails(c, "tau"));
  c = {};  c.lr = 0;             CHECK(fails(c, "lr"));
  c = {};  c.epochs = 0;         CHECK(fails(c, "epochs"));
  c = {};  c.minibatch = 11;     CHECK(fails(c, "minibatch"));
  c = {};  c.minibatch = 0;      CHECK(fails(c, "minibatch"));
  c = {};  c.connectivity = 6;   CHECK(fails(c, "connectivity"));
  c = {};  c.target_label = 4;   CHECK(fails(c, "target_label"));
  c = {};  c.patch_region = {0.5, 0.5, 0.4, 0.9};  CHECK(fails(c, "region"));
}

TEST_CASE("attack loop: trace, range and seeded texture") {
  AttackFixture f;
  AttackConfig cfg = f.config();
  int calls = 0;
  const AttackResult r = das_attack(f.mesh, f.texture, f.patch, f.conds, f.backgrounds, f.model, cfg,
                                    [&](const StepInfo&) { ++calls; });
  // 6 conditions in minibatches of 4: two steps per epoch, the last one partial.
  CHECK(calls == 4);
  CHECK(r.trace.size() == 4);
  CHECK(r.epoch_mean_distraction.size() == 2);
  CHECK(r.t0.image == seed_texture(f.texture, f.patch, cfg).image);
  for (float v : r.t_adv_tensor.data()) CHECK((v >= 0.0f && v <= 1.0f));
  for (const auto& rec : r.trace)
    CHECK(rec.total == doctest::Approx(total_loss(rec.distraction, rec.evasion, rec.smooth * cfg.smooth_weight, cfg.lambda)));
  CHECK(r.edge_mask.width == 64);
  CHECK(r.edge_map.width == 16);
  CHECK_THROWS_AS(das_attack(f.mesh, f.texture, f.patch, {}, f.backgrounds, f.model, cfg), std::invalid_argument);
}

TEST_CASE("attack loop: a huge evasion weight keeps the texture at its seed") {
  AttackFixture f;
  AttackConfig cfg = f.config();
  cfg.lambda = 1e6;
  // Adam moves every texel by about lr on its first step whatever the weights;
  // the evasion pull damps that within a dozen steps.
  cfg.minibatch = 1;
  cfg.epochs = 5;
  const AttackResult r = das_attack(f.mesh, f.texture, f.patch, f.conds, f.backgrounds, f.model, cfg);
  const Tensor t0 = r.t0.tensor();
  double worst = 0.0;
  for (std::size_t i = 0; i < t0.size(); ++i) worst = std::max(worst, double(std::abs(r.t_adv_tensor[i] - t0[i])));
  INFO("max texel change " << worst);
  CHECK(worst <= 1.0 / 255.0);
}

TEST_CASE("attack loop is deterministic across runs and thread counts") {
  AttackFixture f;
  const AttackConfig cfg = f.config();
  set_thread_count(1);
  const AttackResult a = das_attack(f.mesh, f.texture, f.patch, f.conds, f.backgrounds, f.model, cfg);
  set_thread_count(4);
  const AttackResult b = das_attack(f.mesh, f.texture, f.patch, f.conds, f.backgrounds, f.model, cfg);
  set_thread_count(1);
  CHECK(a.t_adv_tensor == b.t_adv_tensor);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].total == b.trace[i].total);
  AttackConfig other = cfg;
  other.seed = 99;
  const AttackResult c = das_attack(f.mesh, f.texture, f.patch, f.conds, f.backgrounds, f.model, other);
  CHECK_FALSE(a.t_adv_tensor == c.t_adv_tensor);
}
