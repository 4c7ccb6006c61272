#pragma once

// Dense float32 tensors and the plain (untraced) forward kernels.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace das {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thrown when operand shapes are incompatible. The message names the op and
/// the offending shapes, e.g. "matmul: shape mismatch [2,3] vs [4,5]".
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const Shape& a, const Shape& b);
  ShapeError(std::string_view op, const Shape& a, std::string_view detail);
};

/// Immutable row-major float32 tensor. Copies share storage.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<float> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor scalar(float value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_->size(); }
  std::span<const float> data() const { return {data_->data(), data_->size()}; }
  float operator[](std::size_t i) const { return (*data_)[i]; }
  float item() const;
  std::vector<float> to_vector() const { return *data_; }

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<float>> data_;
};

bool all_finite(const Tensor& t);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct Pool2dParams {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

/// Compressed sparse row matrix applied to a flattened input tensor.
struct SparseMatrix {
  Shape in_shape;
  Shape out_shape;
  std::vector<std::size_t> row_ptr;  // size rows+1
  std::vector<std::uint32_t> cols;
  std::vector<float> values;

  std::size_t rows() const { return row_ptr.empty() ? 0 : row_ptr.size() - 1; }
};

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, float s);
Tensor matmul(const Tensor& a, const Tensor& b);
/// x: [N,C,H,W], w: [O,C,kh,kw], bias: [O] or empty.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dParams p);
Tensor relu(const Tensor& x);
Tensor max_pool2d(const Tensor& x, Pool2dParams p);
Tensor avg_pool2d(const Tensor& x, Pool2dParams p);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor square(const Tensor& x);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Numpy-style broadcast to a larger shape.
Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor reshape(const Tensor& x, const Shape& shape);
/// Corner-aligned bilinear resampling of the last two axes.
Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);
/// out = M * flatten(x) + offset, reshaped to M.out_shape. offset may be empty.
Tensor sparse_linear(const Tensor& x, const SparseMatrix& m, const Tensor& offset);
/// Mean softmax cross-entropy of logits [N,C] against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);
Tensor softmax(const Tensor& logits);

}  // namespace ops

namespace kernels {

// C[M,N] = A[M,K] * B[K,N] (accumulate=false overwrites C). Double accumulators.
void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate = false);
// C[M,N] += A[M,K] * B[N,K]^T
void gemm_bt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);
// C[M,N] = A[K,M]^T * B[K,N]
void gemm_at(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c);

void im2col(const float* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, Conv2dParams p, float* cols);
void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, Conv2dParams p, float* x);

std::size_t conv_out_dim(std::size_t in, std::size_t k, Conv2dParams p);

/// Corner-aligned bilinear source coordinate for output index i.
struct LerpTap {
  std::size_t lo, hi;
  float frac;
};
std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out);

}  // namespace kernels

}  // namespace das
