// End-to-end properties of the default scene and attack config.

#include <algorithm>

#include "doctest.h"
#include "das/evalharness.hpp"
#include "model_cache.hpp"

using namespace das;
using namespace das::testing;

namespace {

const Experiment& experiment() {
  static const Experiment ex = [] {
    const RunConfig cfg = end_to_end_config();
    return make_experiment(cfg, cached_models(cfg, load_run_scene(cfg)));
  }();
  return ex;
}

const RunResult& default_run() {
  static const RunResult run = run_experiment(experiment());
  return run;
}

}  // namespace

TEST_CASE("trained models classify raw held-out renders; a black texture hurts most of them") {
  const Experiment& ex = experiment();
  const auto& base = ex.scene.classes[ex.class_id].base_texture;
  const TextureAtlas black(Image(base.width(), base.height(), 3, 0.0f));
  const auto raw = evaluate(ex.models, ex.scene, ex.class_id, base, ex.eval_conditions, &ex.attack_conditions);
  const auto dark = evaluate(ex.models, ex.scene, ex.class_id, black, ex.eval_conditions, &ex.attack_conditions);
  std::size_t hurt = 0;
  for (std::size_t m = 0; m < raw.size(); ++m) {
    CHECK(raw[m] >= 0.9);
    hurt += dark[m] < raw[m];
  }
  CHECK(2 * hurt >= raw.size());
}

TEST_CASE("default attack: progress, white-box drop and distracted attention") {
  const Experiment& ex = experiment();
  const RunResult& run = default_run();
  const auto& d = run.attack.epoch_mean_distraction;
  REQUIRE(d.size() == static_cast<std::size_t>(ex.config.epochs));
  CHECK(d.back() < d.front());

  double max_drop = 0;
  for (const auto& a : run.report.accuracy) max_drop = std::max(max_drop, a.seed - a.adv);
  const auto& wb = run.report.accuracy[ex.attention_model];
  CHECK(wb.white_box);
  CHECK(wb.seed - wb.adv >= max_drop - 0.05);

  CHECK(run.report.mass_decrease_fraction() >= 0.7);
  CHECK(run.report.attention_adv.mean_mass < run.report.attention_seed.mean_mass);
}

TEST_CASE("ablations: L_e alone stays near raw accuracy; the largest lambda is imperceptible") {
  const Experiment& ex = experiment();
  const auto losses = ablate_losses(ex);
  const auto raw = evaluate(ex.models, ex.scene, ex.class_id, ex.scene.classes[ex.class_id].base_texture,
                            ex.eval_conditions, &ex.attack_conditions);
  for (std::size_t m = 0; m < raw.size(); ++m) CHECK(std::abs(losses[1].accuracy[m] - raw[m]) <= 0.10);

  const auto sweep = ablate_lambda(ex, {1e-5, 1e-1});
  CHECK(sweep.back().mean_ssim >= 0.99);
}
