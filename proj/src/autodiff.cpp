#include "das/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace das {

const Tensor& Var::value() const {
  if (graph == nullptr) throw std::logic_error("Var: null graph");
  return graph->value(id);
}

Var Graph::input(Tensor value) {
  nodes_.push_back({"input", {}, std::move(value), {}, tracing_});
  return {this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  nodes_.push_back({"constant", {}, std::move(value), {}, false});
  return {this, nodes_.size() - 1};
}

Var Graph::record(std::string op, std::span<const Var> inputs, Tensor value, BackwardFn backward) {
  Node node{std::move(op), {}, std::move(value), {}, false};
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph != this) throw std::invalid_argument(node.op + ": input belongs to another graph");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (tracing_ && node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Tensor Gradients::operator[](Var v) const {
  if (v.graph != graph_) throw std::invalid_argument("gradient requested for a foreign tensor");
  if (!graph_->requires_grad(v.id)) {
    throw std::invalid_argument("gradient requested for untraced node '" + graph_->op_name(v.id) +
                                "'");
  }
  const auto& g = grads_.at(v.id);
  return g ? *g : Tensor::zeros(graph_->value(v.id).shape());
}

Gradients backward(const Graph& graph, Var root) { return backward(graph, root, {}); }

Gradients backward(const Graph& graph, Var root, std::span<const Var> wrt) {
  if (root.graph != &graph) throw std::invalid_argument("backward: root belongs to another graph");
  if (!graph.tracing()) throw std::invalid_argument("backward: graph was built without tracing");
  const Tensor& rv = graph.value(root.id);
  if (rv.size() != 1) throw ShapeError("backward", rv.shape(), "root must be a scalar");
  if (!graph.requires_grad(root.id)) {
    throw std::invalid_argument("backward: root does not depend on any traced input");
  }

  // With an explicit target list, only nodes downstream of a target carry gradient.
  std::vector<bool> relevant;
  if (!wrt.empty()) {
    relevant.assign(root.id + 1, false);
    for (const Var& v : wrt) {
      if (v.graph != &graph) throw std::invalid_argument("backward: target belongs to another graph");
      if (v.id <= root.id) relevant[v.id] = true;
    }
    for (std::size_t id = 0; id <= root.id; ++id) {
      if (relevant[id]) continue;
      for (std::size_t in : graph.nodes_[id].inputs) {
        if (relevant[in]) {
          relevant[id] = true;
          break;
        }
      }
    }
  }

  Gradients out;
  out.graph_ = &graph;
  out.grads_.resize(root.id + 1);
  out.grads_[root.id] = Tensor::full(rv.shape(), 1.0f);

  for (std::size_t id = root.id + 1; id-- > 0;) {
    const auto& node = graph.nodes_[id];
    if (!out.grads_[id] || !node.backward) continue;
    std::vector<bool> need(node.inputs.size());
    bool any = false;
    for (std::size_t i = 0; i < need.size(); ++i) {
      const std::size_t in = node.inputs[i];
      need[i] = graph.nodes_[in].requires_grad && (relevant.empty() || relevant[in]);
      any = any || need[i];
    }
    if (!any) continue;
    std::vector<Tensor> gin = node.backward(*out.grads_[id], need);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (!need[i]) continue;
      auto& slot = out.grads_[node.inputs[i]];
      slot = slot ? ops::add(*slot, gin[i]) : std::move(gin[i]);
    }
  }
  return out;
}

double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, float step) {
  if (!(step > 0.0f)) throw std::invalid_argument("finite_diff_check: step must be positive");
  Graph g;
  const Var xv = g.input(x);
  const Var root = f(g, xv);
  const Tensor analytic = backward(g, root)[xv];

  auto eval = [&](const std::vector<float>& data) {
    Graph probe(Tracing::off);
    return static_cast<double>(f(probe, probe.input(Tensor(x.shape(), data))).value().item());
  };
  std::vector<float> work = x.to_vector();
  double worst = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    const float orig = work[i];
    work[i] = orig + step;
    const double up = eval(work);
    work[i] = orig - step;
    const double down = eval(work);
    work[i] = orig;
    const double numeric = (up - down) / (2.0 * static_cast<double>(step));
    const double err = std::abs(analytic[i] - numeric) / (std::abs(numeric) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

namespace ag {
namespace {

using Grads = std::vector<Tensor>;

Var unary(std::string op, Var x, Tensor value, std::function<Tensor(const Tensor&)> bw) {
  const Var in[] = {x};
  return x.graph->record(std::move(op), in, std::move(value),
                         [bw = std::move(bw)](const Tensor& g, const std::vector<bool>&) {
                           return Grads{bw(g)};
                         });
}

Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  const Shape& full = g.shape();
  const std::size_t lead = full.size() - target.size();
  Shape padded(full.size(), 1);
  for (std::size_t i = 0; i < target.size(); ++i) padded[lead + i] = target[i];
  std::vector<std::size_t> stride(full.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = full.size(); i-- > 0;) {
    stride[i] = padded[i] == 1 ? 0 : s;
    s *= padded[i];
  }
  std::vector<double> acc(numel(target), 0.0);
  std::vector<std::size_t> idx(full.size(), 0);
  const auto d = g.data();
  for (std::size_t flat = 0; flat < g.size(); ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < full.size(); ++i) off += idx[i] * stride[i];
    acc[off] += d[flat];
    for (std::size_t i = full.size(); i-- > 0;) {
      if (++idx[i] < full[i]) break;
      idx[i] = 0;
    }
  }
  return Tensor(target, std::vector<float>(acc.begin(), acc.end()));
}

}  // namespace

Var add(Var a, Var b) {
  const Var in[] = {a, b};
  return a.graph->record("add", in, ops::add(a.value(), b.value()),
                         [](const Tensor& g, const std::vector<bool>&) { return Grads{g, g}; });
}

Var sub(Var a, Var b) {
  const Var in[] = {a, b};
  return a.graph->record("sub", in, ops::sub(a.value(), b.value()),
                         [](const Tensor& g, const std::vector<bool>& need) {
                           return Grads{g, need[1] ? ops::scalar_mul(g, -1.0f) : Tensor()};
                         });
}

Var mul(Var a, Var b) {
  const Var in[] = {a, b};
  return a.graph->record(
      "mul", in, ops::mul(a.value(), b.value()),
      [av = a.value(), bv = b.value()](const Tensor& g, const std::vector<bool>& need) {
        return Grads{need[0] ? ops::mul(g, bv) : Tensor(), need[1] ? ops::mul(g, av) : Tensor()};
      });
}

Var scalar_mul(Var a, float s) {
  return unary("scalar_mul", a, ops::scalar_mul(a.value(), s),
               [s](const Tensor& g) { return ops::scalar_mul(g, s); });
}

Var matmul(Var a, Var b) {
  const Var in[] = {a, b};
  return a.graph->record(
      "matmul", in, ops::matmul(a.value(), b.value()),
      [av = a.value(), bv = b.value()](const Tensor& g, const std::vector<bool>& need) {
        const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        Grads out(2);
        if (need[0]) {
          std::vector<float> da(m * k, 0.0f);
          kernels::gemm_bt(m, k, n, g.data().data(), bv.data().data(), da.data());
          out[0] = Tensor(av.shape(), std::move(da));
        }
        if (need[1]) {
          std::vector<float> db(k * n);
          kernels::gemm_at(k, n, m, av.data().data(), g.data().data(), db.data());
          out[1] = Tensor(bv.shape(), std::move(db));
        }
        return out;
      });
}

Var conv2d(Var x, Var w, Var bias, Conv2dParams p) {
  const Var in[] = {x, w, bias};
  return x.graph->record(
      "conv2d", in, ops::conv2d(x.value(), w.value(), bias.value(), p),
      [xv = x.value(), wv = w.value(), p](const Tensor& g, const std::vector<bool>& need) {
        const std::size_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
        const std::size_t o = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
        const std::size_t oh = g.dim(2), ow = g.dim(3), hw = oh * ow, ckk = c * kh * kw;
        std::vector<float> cols(ckk * hw);
        std::vector<float> dx(need[0] ? xv.size() : 0, 0.0f);
        std::vector<float> dw(need[1] ? wv.size() : 0, 0.0f);
        std::vector<float> dcols(need[0] ? ckk * hw : 0);
        for (std::size_t i = 0; i < n; ++i) {
          const float* gi = g.data().data() + i * o * hw;
          if (need[1]) {
            kernels::im2col(xv.data().data() + i * c * h * wd, c, h, wd, kh, kw, p, cols.data());
            kernels::gemm_bt(o, ckk, hw, gi, cols.data(), dw.data());
          }
          if (need[0]) {
            kernels::gemm_at(ckk, hw, o, wv.data().data(), gi, dcols.data());
            kernels::col2im(dcols.data(), c, h, wd, kh, kw, p, dx.data() + i * c * h * wd);
          }
        }
        Grads out(3);
        if (need[0]) out[0] = Tensor(xv.shape(), std::move(dx));
        if (need[1]) out[1] = Tensor(wv.shape(), std::move(dw));
        if (need[2]) {
          std::vector<double> db(o, 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t oc = 0; oc < o; ++oc) {
              const float* gp = g.data().data() + (i * o + oc) * hw;
              for (std::size_t j = 0; j < hw; ++j) db[oc] += gp[j];
            }
          }
          out[2] = Tensor({o}, std::vector<float>(db.begin(), db.end()));
        }
        return out;
      });
}

Var relu(Var x) {
  return unary("relu", x, ops::relu(x.value()), [xv = x.value()](const Tensor& g) {
    std::vector<float> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0f ? g[i] : 0.0f;
    return Tensor(g.shape(), std::move(out));
  });
}

Var max_pool2d(Var x, Pool2dParams p) {
  return unary("max_pool2d", x, ops::max_pool2d(x.value(), p), [xv = x.value(), p](const Tensor& g) {
    const std::size_t h = xv.dim(2), w = xv.dim(3), oh = g.dim(2), ow = g.dim(3);
    const std::size_t planes = xv.dim(0) * xv.dim(1);
    std::vector<float> dx(xv.size(), 0.0f);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      const float* src = xv.data().data() + pl * h * w;
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          std::size_t best = (oy * p.stride) * w + ox * p.stride;
          for (std::size_t ky = 0; ky < p.kernel; ++ky) {
            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
              const std::size_t at = (oy * p.stride + ky) * w + ox * p.stride + kx;
              if (src[at] > src[best]) best = at;
            }
          }
          dx[pl * h * w + best] += g[(pl * oh + oy) * ow + ox];
        }
      }
    }
    return Tensor(xv.shape(), std::move(dx));
  });
}

Var avg_pool2d(Var x, Pool2dParams p) {
  return unary("avg_pool2d", x, ops::avg_pool2d(x.value(), p), [shape = x.shape(), p](const Tensor& g) {
    const std::size_t h = shape[2], w = shape[3], oh = g.dim(2), ow = g.dim(3);
    const std::size_t planes = shape[0] * shape[1];
    const float inv = 1.0f / static_cast<float>(p.kernel * p.kernel);
    std::vector<float> dx(numel(shape), 0.0f);
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const float gv = g[(pl * oh + oy) * ow + ox] * inv;
          for (std::size_t ky = 0; ky < p.kernel; ++ky) {
            for (std::size_t kx = 0; kx < p.kernel; ++kx) {
              dx[pl * h * w + (oy * p.stride + ky) * w + ox * p.stride + kx] += gv;
            }
          }
        }
      }
    }
    return Tensor(shape, std::move(dx));
  });
}

Var sum(Var x) {
  return unary("sum", x, ops::sum(x.value()),
               [shape = x.shape()](const Tensor& g) { return Tensor::full(shape, g.item()); });
}

Var mean(Var x) {
  return unary("mean", x, ops::mean(x.value()), [shape = x.shape()](const Tensor& g) {
    return Tensor::full(shape, static_cast<float>(g.item() / static_cast<double>(numel(shape))));
  });
}

Var square(Var x) {
  return unary("square", x, ops::square(x.value()), [xv = x.value()](const Tensor& g) {
    std::vector<float> out(g.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0f * xv[i] * g[i];
    return Tensor(g.shape(), std::move(out));
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", Shape{}, "no inputs");
  std::vector<Tensor> values;
  std::vector<std::size_t> sizes;
  for (const Var& v : parts) {
    values.push_back(v.value());
    sizes.push_back(v.value().dim(axis));
  }
  return parts[0].graph->record("concat", parts, ops::concat(values, axis),
                                [axis, sizes](const Tensor& g, const std::vector<bool>& need) {
                                  Grads out(sizes.size());
                                  std::size_t begin = 0;
                                  for (std::size_t i = 0; i < sizes.size(); ++i) {
                                    if (need[i]) out[i] = ops::slice(g, axis, begin, begin + sizes[i]);
                                    begin += sizes[i];
                                  }
                                  return out;
                                });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  return unary("slice", x, ops::slice(x.value(), axis, begin, end),
               [shape = x.shape(), axis, begin](const Tensor& g) {
                 const std::size_t outer = numel(Shape(shape.begin(), shape.begin() + axis));
                 const std::size_t inner = numel(Shape(shape.begin() + axis + 1, shape.end()));
                 const std::size_t len = g.dim(axis);
                 std::vector<float> dx(numel(shape), 0.0f);
                 for (std::size_t o = 0; o < outer; ++o) {
                   std::copy_n(g.data().data() + o * len * inner, len * inner,
                               dx.data() + (o * shape[axis] + begin) * inner);
                 }
                 return Tensor(shape, std::move(dx));
               });
}

Var broadcast_to(Var x, const Shape& shape) {
  return unary("broadcast", x, ops::broadcast_to(x.value(), shape),
               [src = x.shape()](const Tensor& g) { return reduce_to(g, src); });
}

Var reshape(Var x, const Shape& shape) {
  return unary("reshape", x, ops::reshape(x.value(), shape),
               [src = x.shape()](const Tensor& g) { return g.reshaped(src); });
}

Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w) {
  return unary("upsample_bilinear", x, ops::upsample_bilinear(x.value(), out_h, out_w),
               [src = x.shape(), out_h, out_w](const Tensor& g) {
                 const std::size_t h = src[src.size() - 2], w = src[src.size() - 1];
                 const std::size_t planes = numel(src) / (h * w);
                 const auto ty = kernels::lerp_taps(h, out_h), tx = kernels::lerp_taps(w, out_w);
                 std::vector<double> acc(numel(src), 0.0);
                 for (std::size_t pl = 0; pl < planes; ++pl) {
                   double* dst = acc.data() + pl * h * w;
                   const float* gp = g.data().data() + pl * out_h * out_w;
                   for (std::size_t y = 0; y < out_h; ++y) {
                     const auto& a = ty[y];
                     for (std::size_t xx = 0; xx < out_w; ++xx) {
                       const auto& b = tx[xx];
                       const double gv = gp[y * out_w + xx];
                       dst[a.lo * w + b.lo] += gv * (1.0 - a.frac) * (1.0 - b.frac);
                       dst[a.lo * w + b.hi] += gv * (1.0 - a.frac) * b.frac;
                       dst[a.hi * w + b.lo] += gv * a.frac * (1.0 - b.frac);
                       dst[a.hi * w + b.hi] += gv * a.frac * b.frac;
                     }
                   }
                 }
                 return Tensor(src, std::vector<float>(acc.begin(), acc.end()));
               });
}

Var sparse_linear(Var x, std::shared_ptr<const SparseMatrix> m, Tensor offset) {
  Tensor value = ops::sparse_linear(x.value(), *m, offset);
  return unary("sparse_linear", x, std::move(value), [m](const Tensor& g) {
    std::vector<double> acc(numel(m->in_shape), 0.0);
    for (std::size_t r = 0; r < m->rows(); ++r) {
      const double gv = g[r];
      if (gv == 0.0) continue;
      for (std::size_t e = m->row_ptr[r]; e < m->row_ptr[r + 1]; ++e) {
        acc[m->cols[e]] += gv * m->values[e];
      }
    }
    return Tensor(m->in_shape, std::vector<float>(acc.begin(), acc.end()));
  });
}

Var softmax_cross_entropy(Var logits, std::vector<int> labels) {
  Tensor value = ops::softmax_cross_entropy(logits.value(), labels);
  return unary("softmax_cross_entropy", logits, std::move(value),
               [lv = logits.value(), labels = std::move(labels)](const Tensor& g) {
                 const Tensor probs = ops::softmax(lv);
                 const std::size_t n = lv.dim(0), c = lv.dim(1);
                 const float scale = g.item() / static_cast<float>(n);
                 std::vector<float> out = probs.to_vector();
                 for (std::size_t i = 0; i < n; ++i) {
                   out[i * c + static_cast<std::size_t>(labels[i])] -= 1.0f;
                 }
                 for (float& v : out) v *= scale;
                 return Tensor(lv.shape(), std::move(out));
               });
}

}  // namespace ag
}  // namespace das
