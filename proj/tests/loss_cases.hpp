#pragma once

// Randomized finite-difference cases for the renderer and the three losses.
// Shared by the unit tests and the acceptance suite.

#include <filesystem>

#include "das/attack.hpp"
#include "das/render.hpp"
#include "das/scene.hpp"
#include "gradcheck_cases.hpp"

namespace das::testing {

/// Smooth blob map in [0,1] with max exactly 1, then pushed away from the
/// tau = 0.5 threshold: values land in [0, 0.3) or [0.7, 1].
inline Tensor separated_blob_map(int w, int h, std::mt19937& rng) {
  std::uniform_real_distribution<double> pos(0.0, 1.0);
  std::uniform_int_distribution<int> blobs(1, 3);
  const int nb = blobs(rng);
  std::vector<double> raw(static_cast<std::size_t>(w) * h, 0.0);
  for (int b = 0; b < nb; ++b) {
    const double cx = pos(rng) * w, cy = pos(rng) * h, s = 1.0 + 2.0 * pos(rng), a = 0.5 + 0.5 * pos(rng);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        raw[y * w + x] += a * std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * s * s));
  }
  const double peak = *std::max_element(raw.begin(), raw.end());
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = raw[i] / peak;
    out[i] = static_cast<float>(v >= 0.5 ? 0.7 + 0.3 * (v - 0.5) / 0.5 : 0.3 * v / 0.5);
  }
  return Tensor({static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(out));
}

/// Render operator of the shipped car mesh for a small image and atlas.
inline RenderOperator small_car_operator(int trial) {
  static const Mesh car = load_mesh(std::filesystem::path(DAS_ASSETS_DIR) / "meshes" / "car.obj");
  const RenderCondition c{7.0 + trial % 4 * 2.0, std::fmod(37.0 * trial, 360.0), 10.0 + (trial * 13) % 80, 1.0, 0};
  const RenderMap map = bake_condition(car, c, 24, 24, 16, 16);
  return RenderOperator(map, make_background(24, 24, 0));
}

inline std::vector<GradCase> loss_grad_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"render wrt texture", [](std::mt19937& rng) {
                     static int trial = 0;
                     const RenderOperator op = small_car_operator(trial++);
                     const Tensor tex = random_tensor({3, 16, 16}, rng, 0.2f, 0.8f);
                     // Linear operator: a large step adds no truncation error.
                     return probe_check([&](Graph&, Var t) { return op.apply(t); }, tex, 0.5f, rng);
                   }});
  cases.push_back({"distraction loss (frozen partition)", [](std::mt19937& rng) {
                     const Tensor map = separated_blob_map(10, 10, rng);
                     // Steps of 0.05 never move a pixel across the threshold.
                     return finite_diff_check(
                         [](Graph& g, Var m) { return distraction_loss(g, m, 0.5, 4); }, map, 0.05f);
                   }});
  cases.push_back({"evasion loss", [](std::mt19937& rng) {
                     const Tensor t0 = random_tensor({3, 4, 4}, rng, 0.3f, 0.7f);
                     const Tensor delta = signed_tensor({3, 4, 4}, rng, 0.1f, 0.3f);
                     BinaryMap edge(4, 4);
                     std::bernoulli_distribution bit(0.4);
                     for (auto& b : edge.bits) b = bit(rng);
                     return finite_diff_check(
                         [t0, edge](Graph& g, Var t) { return evasion_loss(g, t, t0, edge, 8.0); },
                         ops::add(t0, delta), 0.1f);
                   }});
  cases.push_back({"smooth loss", [](std::mt19937& rng) {
                     // Redraw until no pixel's gradient nearly cancels.
                     for (;;) {
                       const Tensor img = random_tensor({3, 5, 5}, rng, 0.0f, 1.0f);
                       Graph g;
                       const Var x = g.input(img);
                       const Tensor grad = backward(g, smooth_loss(x))[x];
                       bool ok = true;
                       for (float v : grad.data()) ok = ok && std::abs(v) >= 0.2f;
                       if (!ok) continue;
                       return finite_diff_check([](Graph&, Var v) { return smooth_loss(v); }, img, 0.05f);
                     }
                   }});
  return cases;
}

}  // namespace das::testing
