#pragma once

// Tape-based reverse-mode automatic differentiation over das::Tensor.
//
// A Graph records every traced op in topological order. backward() walks the
// tape once from a scalar root and returns a gradient table; the graph itself
// is never mutated by backward, so several roots can be differentiated on the
// same tape (the attention pipeline relies on that).

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "das/tensor.hpp"

namespace das {

class Graph;
class Gradients;
Gradients backward(const Graph& graph, struct Var root);

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

enum class Tracing { on, off };

class Graph {
 public:
  /// Returns one gradient per input (an empty Tensor where need[i] is false).
  using BackwardFn =
      std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& need)>;

  explicit Graph(Tracing tracing = Tracing::on) : tracing_(tracing == Tracing::on) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that receives a gradient.
  Var input(Tensor value);
  /// Leaf treated as a constant (stop-gradient).
  Var constant(Tensor value);

  Var record(std::string op, std::span<const Var> inputs, Tensor value, BackwardFn backward);

  bool tracing() const { return tracing_; }
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
  };

  friend class Gradients;
  friend Gradients backward(const Graph& graph, Var root, std::span<const Var> wrt);

  bool tracing_;
  std::vector<Node> nodes_;
};

class Gradients {
 public:
  /// Gradient of the root w.r.t. v. Nodes the root does not depend on get zeros.
  /// Throws for vars of another graph and for constants.
  Tensor operator[](Var v) const;

 private:
  friend Gradients backward(const Graph& graph, Var root, std::span<const Var> wrt);
  const Graph* graph_ = nullptr;
  std::vector<std::optional<Tensor>> grads_;
};

/// Reverse pass from a scalar root.
Gradients backward(const Graph& graph, Var root);
/// Reverse pass restricted to paths from `wrt` to the root. Only the gradients
/// of the listed vars are meaningful; everything upstream of them is skipped.
Gradients backward(const Graph& graph, Var root, std::span<const Var> wrt);

/// Max over coordinates of |analytic - central difference| / (|central difference| + 1e-8).
/// `f` builds a scalar from its input inside the supplied graph.
double finite_diff_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, float step);

namespace ag {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, float s);
Var matmul(Var a, Var b);
Var conv2d(Var x, Var w, Var bias, Conv2dParams p);
Var relu(Var x);
Var max_pool2d(Var x, Pool2dParams p);
Var avg_pool2d(Var x, Pool2dParams p);
Var sum(Var x);
Var mean(Var x);
Var square(Var x);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var broadcast_to(Var x, const Shape& shape);
Var reshape(Var x, const Shape& shape);
Var upsample_bilinear(Var x, std::size_t out_h, std::size_t out_w);
Var sparse_linear(Var x, std::shared_ptr<const SparseMatrix> m, Tensor offset);
Var softmax_cross_entropy(Var logits, std::vector<int> labels);

}  // namespace ag
}  // namespace das
