#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "das/autodiff.hpp"

namespace das::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937& rng, float lo = -1.0f,
                            float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(numel(shape));
  for (auto& v : data) v = dist(rng);
  return Tensor(shape, std::move(data));
}

/// Values with |v| in [min_abs, max_abs] and random sign; keeps relu/abs away from kinks.
inline Tensor signed_tensor(const Shape& shape, std::mt19937& rng, float min_abs, float max_abs) {
  std::uniform_real_distribution<float> mag(min_abs, max_abs);
  std::bernoulli_distribution sign(0.5);
  std::vector<float> data(numel(shape));
  for (auto& v : data) v = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor(shape, std::move(data));
}

/// Scalar probe r . (op(x) - op(x0)) with positive weights r. Subtracting the
/// base output keeps the root near zero, so float rounding of the root does not
/// swamp the central difference; positive r avoids gradients that cancel to
/// nearly zero, where a float32 relative error is meaningless.
using OpFn = std::function<Var(Graph&, Var)>;

inline std::function<Var(Graph&, Var)> probe(const OpFn& op, const Tensor& x, std::mt19937& rng) {
  Graph base(Tracing::off);
  const Tensor y0 = op(base, base.input(x)).value();
  const Tensor r = random_tensor(y0.shape(), rng, 0.5f, 1.5f);
  return [op, y0, r](Graph& g, Var xv) {
    const Var y = op(g, xv);
    return ag::sum(ag::mul(ag::sub(y, g.constant(y0)), g.constant(r)));
  };
}

inline double probe_check(const OpFn& op, const Tensor& x, float step, std::mt19937& rng) {
  return finite_diff_check(probe(op, x, rng), x, step);
}

}  // namespace das::testing
