#include "das/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace das {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(std::string_view op, const Shape& a, const Shape& b)
    : std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                            shape_str(b)) {}

ShapeError::ShapeError(std::string_view op, const Shape& a, std::string_view detail)
    : std::invalid_argument(std::string(op) + ": bad shape " + shape_str(a) + " (" +
                            std::string(detail) + ")") {}

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<float>>(std::move(data))) {
  if (numel(shape_) != data_->size()) {
    throw ShapeError("tensor", shape_,
                     "data length " + std::to_string(data_->size()) + " != product of dims");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::scalar(float value) { return Tensor(Shape{}, {value}); }

float Tensor::item() const {
  if (size() != 1) throw ShapeError("item", shape_, "expected exactly one element");
  return (*data_)[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != size()) throw ShapeError("reshape", shape_, shape);
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  // Bitwise comparison so that determinism checks are exact (and NaN-safe).
  return std::equal(a.data_->begin(), a.data_->end(), b.data_->begin(),
                    [](float x, float y) { return std::bit_cast<std::uint32_t>(x) ==
                                                  std::bit_cast<std::uint32_t>(y); });
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](float v) { return std::isfinite(v); });
}

namespace kernels {

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b, float* c,
          bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) acc[j] = crow[j];
    } else {
      std::fill(acc.begin(), acc.end(), 0.0);
    }
    const float* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

void gemm_bt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
      c[i * n + j] += static_cast<float>(acc);
    }
  }
}

void gemm_at(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[p * m + i];
      if (av == 0.0) continue;
      const float* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    float* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = static_cast<float>(acc[j]);
  }
}

std::size_t conv_out_dim(std::size_t in, std::size_t k, Conv2dParams p) {
  if (p.stride == 0 || in + 2 * p.pad < k) return 0;
  return (in + 2 * p.pad - k) / p.stride + 1;
}

void im2col(const float* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, Conv2dParams p, float* cols) {
  const std::size_t oh = conv_out_dim(h, kh, p), ow = conv_out_dim(w, kw, p);
  const auto pad = static_cast<std::ptrdiff_t>(p.pad);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        float* dst = cols + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) - pad;
          float* row = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(row, row + ow, 0.0f);
            continue;
          }
          const float* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) - pad;
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, Conv2dParams p, float* x) {
  const std::size_t oh = conv_out_dim(h, kh, p), ow = conv_out_dim(w, kw, p);
  const auto pad = static_cast<std::ptrdiff_t>(p.pad);
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const float* src = cols + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * p.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          float* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * p.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (in == 1 || out == 1) {
      taps[i] = {0, 0, 0.0f};
      continue;
    }
    const double pos = static_cast<double>(i) * static_cast<double>(in - 1) /
                       static_cast<double>(out - 1);
    auto lo = static_cast<std::size_t>(std::floor(pos));
    lo = std::min(lo, in - 1);
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, static_cast<float>(pos - static_cast<double>(lo))};
  }
  return taps;
}

}  // namespace kernels

namespace ops {
namespace {

template <class F>
Tensor elementwise(std::string_view op, const Tensor& a, const Tensor& b, F f) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
  std::vector<float> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i], db[i]);
  return Tensor(a.shape(), std::move(out));
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  std::vector<float> out(a.size());
  const auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i]);
  return Tensor(a.shape(), std::move(out));
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) throw ShapeError(op, t.shape(), "expected rank " + std::to_string(rank));
}

template <bool IsMax>
Tensor pool(std::string_view op, const Tensor& x, Pool2dParams p) {
  require_rank(op, x, 4);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (p.kernel == 0 || p.stride == 0 || h < p.kernel || w < p.kernel) {
    throw ShapeError(op, x.shape(), "kernel " + std::to_string(p.kernel) + " does not fit");
  }
  const std::size_t oh = (h - p.kernel) / p.stride + 1, ow = (w - p.kernel) / p.stride + 1;
  std::vector<float> out(n * c * oh * ow);
  const auto d = x.data();
  const double inv = 1.0 / static_cast<double>(p.kernel * p.kernel);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = d.data() + plane * h * w;
    float* dst = out.data() + plane * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = IsMax ? -std::numeric_limits<double>::infinity() : 0.0;
        for (std::size_t ky = 0; ky < p.kernel; ++ky) {
          const float* row = src + (oy * p.stride + ky) * w + ox * p.stride;
          for (std::size_t kx = 0; kx < p.kernel; ++kx) {
            if constexpr (IsMax) {
              acc = std::max<double>(acc, row[kx]);
            } else {
              acc += row[kx];
            }
          }
        }
        dst[oy * ow + ox] = static_cast<float>(IsMax ? acc : acc * inv);
      }
    }
  }
  return Tensor({n, c, oh, ow}, std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise("add", a, b, [](float x, float y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise("sub", a, b, [](float x, float y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise("mul", a, b, [](float x, float y) { return x * y; });
}
Tensor scalar_mul(const Tensor& a, float s) {
  return unary(a, [s](float x) { return x * s; });
}
Tensor relu(const Tensor& x) {
  return unary(x, [](float v) { return v > 0.0f ? v : 0.0f; });
}
Tensor square(const Tensor& x) {
  return unary(x, [](float v) { return v * v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(m * n);
  kernels::gemm(m, n, k, a.data().data(), b.data().data(), out.data());
  return Tensor({m, n}, std::move(out));
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dParams p) {
  require_rank("conv2d", x, 4);
  if (w.rank() != 4 || w.dim(1) != x.dim(1)) throw ShapeError("conv2d", x.shape(), w.shape());
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (bias.size() != 0 && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("conv2d", w.shape(), bias.shape());
  }
  const std::size_t oh = kernels::conv_out_dim(h, kh, p), ow = kernels::conv_out_dim(wd, kw, p);
  if (oh == 0 || ow == 0) throw ShapeError("conv2d", x.shape(), w.shape());
  const std::size_t ckk = c * kh * kw, hw = oh * ow;
  std::vector<float> cols(ckk * hw);
  std::vector<float> out(n * o * hw);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::im2col(x.data().data() + i * c * h * wd, c, h, wd, kh, kw, p, cols.data());
    float* dst = out.data() + i * o * hw;
    if (bias.size() != 0) {
      for (std::size_t oc = 0; oc < o; ++oc) std::fill_n(dst + oc * hw, hw, bias[oc]);
    }
    kernels::gemm(o, hw, ckk, w.data().data(), cols.data(), dst, bias.size() != 0);
  }
  return Tensor({n, o, oh, ow}, std::move(out));
}

Tensor max_pool2d(const Tensor& x, Pool2dParams p) { return pool<true>("max_pool2d", x, p); }
Tensor avg_pool2d(const Tensor& x, Pool2dParams p) { return pool<false>("avg_pool2d", x, p); }

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return Tensor::scalar(static_cast<float>(acc));
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean", x.shape(), "empty tensor");
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  return Tensor::scalar(static_cast<float>(acc / static_cast<double>(x.size())));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", Shape{}, "no inputs");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw ShapeError("concat", out_shape, "axis out of range");
  Shape ref = out_shape;
  ref[axis] = 0;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    Shape probe = t.shape();
    if (probe.size() != ref.size()) throw ShapeError("concat", parts[0].shape(), t.shape());
    probe[axis] = 0;
    if (probe != ref) throw ShapeError("concat", parts[0].shape(), t.shape());
    out_shape[axis] += t.dim(axis);
  }
  const std::size_t outer = numel(Shape(out_shape.begin(), out_shape.begin() + axis));
  const std::size_t inner = numel(Shape(out_shape.begin() + axis + 1, out_shape.end()));
  std::vector<float> out;
  out.reserve(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    for (const auto& t : parts) {
      const std::size_t chunk = t.dim(axis) * inner;
      const float* src = t.data().data() + o * chunk;
      out.insert(out.end(), src, src + chunk);
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin > end || end > x.dim(axis)) {
    throw ShapeError("slice", x.shape(),
                     "axis " + std::to_string(axis) + " range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ")");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t outer = numel(Shape(x.shape().begin(), x.shape().begin() + axis));
  const std::size_t inner = numel(Shape(x.shape().begin() + axis + 1, x.shape().end()));
  std::vector<float> out;
  out.reserve(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    const float* src = x.data().data() + (o * x.dim(axis) + begin) * inner;
    out.insert(out.end(), src, src + (end - begin) * inner);
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.rank() > shape.size()) throw ShapeError("broadcast", x.shape(), shape);
  const std::size_t lead = shape.size() - x.rank();
  Shape src(shape.size(), 1);
  for (std::size_t i = 0; i < x.rank(); ++i) {
    src[lead + i] = x.dim(i);
    if (x.dim(i) != 1 && x.dim(i) != shape[lead + i]) throw ShapeError("broadcast", x.shape(), shape);
  }
  std::vector<std::size_t> src_stride(shape.size(), 0);
  std::size_t s = 1;
  for (std::size_t i = shape.size(); i-- > 0;) {
    src_stride[i] = src[i] == 1 ? 0 : s;
    s *= src[i];
  }
  const std::size_t total = numel(shape);
  std::vector<float> out(total);
  std::vector<std::size_t> idx(shape.size(), 0);
  const auto d = x.data();
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) off += idx[i] * src_stride[i];
    out[flat] = d[off];
    for (std::size_t i = shape.size(); i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return Tensor(shape, std::move(out));
}

Tensor reshape(const Tensor& x, const Shape& shape) { return x.reshaped(shape); }

Tensor upsample_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  if (x.rank() < 2 || out_h == 0 || out_w == 0) {
    throw ShapeError("upsample_bilinear", x.shape(), "need rank >= 2 and positive target size");
  }
  const std::size_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  const std::size_t planes = x.size() / (h * w);
  const auto ty = kernels::lerp_taps(h, out_h), tx = kernels::lerp_taps(w, out_w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  std::vector<float> out(planes * out_h * out_w);
  const auto d = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const float* src = d.data() + pl * h * w;
    float* dst = out.data() + pl * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (std::size_t xx = 0; xx < out_w; ++xx) {
        const auto& b = tx[xx];
        const double top = src[a.lo * w + b.lo] * (1.0 - b.frac) + src[a.lo * w + b.hi] * b.frac;
        const double bot = src[a.hi * w + b.lo] * (1.0 - b.frac) + src[a.hi * w + b.hi] * b.frac;
        dst[y * out_w + xx] = static_cast<float>(top * (1.0 - a.frac) + bot * a.frac);
      }
    }
  }
  return Tensor(std::move(out_shape), std::move(out));
}

Tensor sparse_linear(const Tensor& x, const SparseMatrix& m, const Tensor& offset) {
  if (x.shape() != m.in_shape) throw ShapeError("sparse_linear", x.shape(), m.in_shape);
  const std::size_t rows = m.rows();
  if (numel(m.out_shape) != rows) throw ShapeError("sparse_linear", m.out_shape, "row count");
  if (offset.size() != 0 && offset.shape() != m.out_shape) {
    throw ShapeError("sparse_linear", offset.shape(), m.out_shape);
  }
  std::vector<float> out(rows);
  const auto d = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = offset.size() != 0 ? offset[r] : 0.0;
    for (std::size_t e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) {
      acc += static_cast<double>(m.values[e]) * d[m.cols[e]];
    }
    out[r] = static_cast<float>(acc);
  }
  return Tensor(m.out_shape, std::move(out));
}

Tensor softmax(const Tensor& logits) {
  require_rank("softmax", logits, 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<float> out(n * c);
  const auto d = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = d.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = static_cast<float>(std::exp(row[j] - mx) / z);
    }
  }
  return Tensor(logits.shape(), std::move(out));
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank("softmax_cross_entropy", logits, 2);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n || n == 0) {
    throw ShapeError("softmax_cross_entropy", logits.shape(),
                     "label count " + std::to_string(labels.size()));
  }
  const auto d = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = d.data() + i * c;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw ShapeError("softmax_cross_entropy", logits.shape(), "label out of range");
    }
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    total += std::log(z) + mx - row[labels[i]];
  }
  return Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
}

}  // namespace ops
}  // namespace das
