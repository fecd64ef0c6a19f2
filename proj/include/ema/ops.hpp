#pragma once

// Numeric primitives over BasicTensor. All functions are pure: they read
// their arguments and return freshly materialized tensors.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ema/tensor.hpp"

namespace ema {

namespace detail {

template <class Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using RowMap = Eigen::Map<RowMatrix<Scalar>>;
template <class Scalar>
using ConstRowMap = Eigen::Map<const RowMatrix<Scalar>>;

inline Index normalize_axis(Index axis, Index rank, const char* what) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw AxisError(std::string(what) + ": axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(rank));
  }
  return axis;
}

/// (outer, extent, inner) factorization of a shape around one axis.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

inline AxisSplit split_around(const Shape& s, Index axis) {
  AxisSplit r;
  for (Index i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (Index i = axis + 1; i < s.rank(); ++i) r.inner *= s[i];
  return r;
}

inline void require_rank(const Shape& s, Index rank, const char* what) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Layout

template <class Scalar>
BasicTensor<Scalar> reshape(const BasicTensor<Scalar>& t, Shape new_shape) {
  if (new_shape.numel() != t.shape().numel()) {
    throw ShapeError("reshape: cannot view " + t.shape().str() + " as " + new_shape.str());
  }
  return BasicTensor<Scalar>(std::move(new_shape), t.array());
}

inline std::vector<Index> inverse_permutation(std::span<const Index> axes) {
  std::vector<Index> inv(axes.size());
  for (std::size_t i = 0; i < axes.size(); ++i) inv[static_cast<std::size_t>(axes[i])] = static_cast<Index>(i);
  return inv;
}

/// out dims are in.dims[axes[0]], in.dims[axes[1]], ...
template <class Scalar>
BasicTensor<Scalar> permute(const BasicTensor<Scalar>& t, std::span<const Index> axes) {
  const Index rank = t.rank();
  if (static_cast<Index>(axes.size()) != rank) throw AxisError("permute: axes length does not match rank");
  std::vector<bool> seen(static_cast<std::size_t>(rank), false);
  for (Index a : axes) {
    if (a < 0 || a >= rank || seen[static_cast<std::size_t>(a)]) {
      throw AxisError("permute: axes are not a permutation of 0..rank-1");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }

  std::vector<Index> out_dims(static_cast<std::size_t>(rank));
  for (Index i = 0; i < rank; ++i) out_dims[static_cast<std::size_t>(i)] = t.shape()[axes[static_cast<std::size_t>(i)]];
  BasicTensor<Scalar> out{Shape(out_dims)};
  if (rank == 0) {
    out[0] = t[0];
    return out;
  }

  // Walk the output in row-major order while tracking the matching input offset.
  const auto in_strides = t.shape().strides();
  std::vector<Index> step(static_cast<std::size_t>(rank));
  for (Index i = 0; i < rank; ++i) step[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  Index src = 0;
  const Index n = out.size();
  for (Index o = 0; o < n; ++o) {
    out[o] = t[src];
    for (Index ax = rank - 1; ax >= 0; --ax) {
      auto a = static_cast<std::size_t>(ax);
      if (++idx[a] < out_dims[a]) {
        src += step[a];
        break;
      }
      src -= step[a] * (out_dims[a] - 1);
      idx[a] = 0;
    }
  }
  return out;
}

template <class Scalar>
BasicTensor<Scalar> permute(const BasicTensor<Scalar>& t, std::initializer_list<Index> axes) {
  return permute(t, std::span<const Index>(axes.begin(), axes.size()));
}

/// Contiguous block [start, start+length) along one axis.
template <class Scalar>
BasicTensor<Scalar> slice(const BasicTensor<Scalar>& t, Index axis, Index start, Index length) {
  axis = detail::normalize_axis(axis, t.rank(), "slice");
  if (start < 0 || length < 1 || start + length > t.shape()[axis]) throw ShapeError("slice: range out of bounds");
  const auto s = detail::split_around(t.shape(), axis);
  BasicTensor<Scalar> out{t.shape().with(axis, length)};
  for (Index o = 0; o < s.outer; ++o) {
    const Scalar* src = t.data() + (o * s.extent + start) * s.inner;
    std::copy(src, src + length * s.inner, out.data() + o * length * s.inner);
  }
  return out;
}

template <class Scalar>
BasicTensor<Scalar> concat(std::span<const BasicTensor<Scalar>> parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  const Shape& first = parts[0].shape();
  axis = detail::normalize_axis(axis, first.rank(), "concat");
  Index total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (Index i = 0; i < first.rank(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) {
        throw ShapeError("concat: " + p.shape().str() + " incompatible with " + first.str() + " off axis " +
                         std::to_string(axis));
      }
    }
    total += p.shape()[axis];
  }
  BasicTensor<Scalar> out{first.with(axis, total)};
  const auto s = detail::split_around(out.shape(), axis);
  Index offset = 0;
  for (const auto& p : parts) {
    const Index len = p.shape()[axis];
    for (Index o = 0; o < s.outer; ++o) {
      const Scalar* src = p.data() + o * len * s.inner;
      std::copy(src, src + len * s.inner, out.data() + (o * s.extent + offset) * s.inner);
    }
    offset += len;
  }
  return out;
}

template <class Scalar>
BasicTensor<Scalar> concat(const std::vector<BasicTensor<Scalar>>& parts, Index axis) {
  return concat(std::span<const BasicTensor<Scalar>>(parts), axis);
}

template <class Scalar>
std::vector<BasicTensor<Scalar>> split(const BasicTensor<Scalar>& t, Index axis, std::span<const Index> sizes) {
  axis = detail::normalize_axis(axis, t.rank(), "split");
  const Index total = std::accumulate(sizes.begin(), sizes.end(), Index{0});
  if (total != t.shape()[axis]) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but extent is " +
                     std::to_string(t.shape()[axis]));
  }
  std::vector<BasicTensor<Scalar>> out;
  out.reserve(sizes.size());
  Index start = 0;
  for (Index len : sizes) {
    out.push_back(slice(t, axis, start, len));
    start += len;
  }
  return out;
}

template <class Scalar>
std::vector<BasicTensor<Scalar>> split(const BasicTensor<Scalar>& t, Index axis, std::initializer_list<Index> sizes) {
  return split(t, axis, std::span<const Index>(sizes.begin(), sizes.size()));
}

// ---------------------------------------------------------------------------
// Broadcasting elementwise arithmetic

enum class BinaryOp { add, sub, mul };

/// Trailing-aligned broadcast: each extent pair must be equal or contain a 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const Index rank = std::max(a.rank(), b.rank());
  std::vector<Index> dims(static_cast<std::size_t>(rank));
  for (Index i = 0; i < rank; ++i) {
    const Index da = i < rank - a.rank() ? 1 : a[i - (rank - a.rank())];
    const Index db = i < rank - b.rank() ? 1 : b[i - (rank - b.rank())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("broadcast: " + a.str() + " and " + b.str() + " are incompatible");
    }
    dims[static_cast<std::size_t>(i)] = std::max(da, db);
  }
  return Shape(std::move(dims));
}

namespace detail {

/// Strides of `s` expressed against a broadcast result of rank `rank`; 0 on broadcast axes.
inline std::vector<Index> broadcast_strides(const Shape& s, const Shape& out) {
  const Index rank = out.rank();
  const auto own = s.strides();
  std::vector<Index> st(static_cast<std::size_t>(rank), 0);
  for (Index i = 0; i < s.rank(); ++i) {
    const Index oi = i + rank - s.rank();
    st[static_cast<std::size_t>(oi)] = s[i] == 1 ? 0 : own[static_cast<std::size_t>(i)];
  }
  return st;
}

template <class Scalar, class F>
BasicTensor<Scalar> broadcast_apply(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, F f) {
  if (a.shape() == b.shape()) {
    return BasicTensor<Scalar>(a.shape(), a.array().binaryExpr(b.array(), f));
  }
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  BasicTensor<Scalar> out{out_shape};
  const Index rank = out_shape.rank();
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  Index ia = 0, ib = 0;
  const Index n = out.size();
  for (Index o = 0; o < n; ++o) {
    out[o] = f(a[ia], b[ib]);
    for (Index ax = rank - 1; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      if (++idx[u] < out_shape[ax]) {
        ia += sa[u];
        ib += sb[u];
        break;
      }
      ia -= sa[u] * (out_shape[ax] - 1);
      ib -= sb[u] * (out_shape[ax] - 1);
      idx[u] = 0;
    }
  }
  return out;
}

}  // namespace detail

template <class Scalar>
BasicTensor<Scalar> broadcast_binary(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, BinaryOp kind) {
  switch (kind) {
    case BinaryOp::add:
      return detail::broadcast_apply(a, b, [](Scalar x, Scalar y) { return x + y; });
    case BinaryOp::sub:
      return detail::broadcast_apply(a, b, [](Scalar x, Scalar y) { return x - y; });
    case BinaryOp::mul:
      return detail::broadcast_apply(a, b, [](Scalar x, Scalar y) { return x * y; });
  }
  throw ShapeError("broadcast_binary: unknown op");
}

template <class Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return broadcast_binary(a, b, BinaryOp::add);
}
template <class Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return broadcast_binary(a, b, BinaryOp::sub);
}
template <class Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return broadcast_binary(a, b, BinaryOp::mul);
}
template <class Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, Scalar s) {
  return BasicTensor<Scalar>(a.shape(), a.array() * s);
}
template <class Scalar>
BasicTensor<Scalar> operator*(Scalar s, const BasicTensor<Scalar>& a) {
  return a * s;
}

/// Sums a broadcast result back down to `target` (adjoint of broadcasting).
template <class Scalar>
BasicTensor<Scalar> sum_to_shape(const BasicTensor<Scalar>& t, const Shape& target) {
  if (t.shape() == target) return t;
  if (broadcast_shape(t.shape(), target) != t.shape()) {
    throw ShapeError("sum_to_shape: " + target.str() + " does not broadcast to " + t.shape().str());
  }
  BasicTensor<Scalar> out{target};
  const Index rank = t.rank();
  const auto st = detail::broadcast_strides(target, t.shape());
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  Index it = 0;
  for (Index o = 0; o < t.size(); ++o) {
    out[it] += t[o];
    for (Index ax = rank - 1; ax >= 0; --ax) {
      auto u = static_cast<std::size_t>(ax);
      if (++idx[u] < t.shape()[ax]) {
        it += st[u];
        break;
      }
      it -= st[u] * (t.shape()[ax] - 1);
      idx[u] = 0;
    }
  }
  return out;
}

template <class Scalar>
Scalar sum(const BasicTensor<Scalar>& t) {
  return t.array().sum();
}

// ---------------------------------------------------------------------------
// Contractions

/// Batched product over rank-3 operands; `transpose_*` swaps the last two axes of that operand.
template <class Scalar>
BasicTensor<Scalar> matmul_batched(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b, bool transpose_a = false,
                                   bool transpose_b = false) {
  detail::require_rank(a.shape(), 3, "matmul_batched");
  detail::require_rank(b.shape(), 3, "matmul_batched");
  if (a.shape()[0] != b.shape()[0]) {
    throw ShapeError("matmul_batched: batch extents differ, " + a.shape().str() + " vs " + b.shape().str());
  }
  const Index batch = a.shape()[0];
  const Index m = transpose_a ? a.shape()[2] : a.shape()[1];
  const Index ka = transpose_a ? a.shape()[1] : a.shape()[2];
  const Index kb = transpose_b ? b.shape()[2] : b.shape()[1];
  const Index n = transpose_b ? b.shape()[1] : b.shape()[2];
  if (ka != kb) {
    throw ShapeError("matmul_batched: inner extents differ, " + a.shape().str() + " vs " + b.shape().str());
  }
  BasicTensor<Scalar> out{Shape{batch, m, n}};
  const Index a_step = a.shape()[1] * a.shape()[2];
  const Index b_step = b.shape()[1] * b.shape()[2];
  for (Index i = 0; i < batch; ++i) {
    detail::ConstRowMap<Scalar> am(a.data() + i * a_step, a.shape()[1], a.shape()[2]);
    detail::ConstRowMap<Scalar> bm(b.data() + i * b_step, b.shape()[1], b.shape()[2]);
    detail::RowMap<Scalar> om(out.data() + i * m * n, m, n);
    if (transpose_a && transpose_b) {
      om.noalias() = am.transpose() * bm.transpose();
    } else if (transpose_a) {
      om.noalias() = am.transpose() * bm;
    } else if (transpose_b) {
      om.noalias() = am * bm.transpose();
    } else {
      om.noalias() = am * bm;
    }
  }
  return out;
}

struct Conv2dGeometry {
  Index batch, in_channels, height, width;
  Index out_channels, kernel;
  Index stride, padding;
  Index out_height, out_width;
};

/// Validates operand shapes and output extents for a square-kernel correlation.
inline Conv2dGeometry conv2d_geometry(const Shape& x, const Shape& w, Index stride, Index padding) {
  detail::require_rank(x, 4, "conv2d input");
  detail::require_rank(w, 4, "conv2d weight");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  if (w[1] != x[1]) {
    throw ShapeError("conv2d: weight " + w.str() + " expects " + std::to_string(w[1]) + " input channels, got " +
                     x.str());
  }
  if (w[2] != w[3]) throw ShapeError("conv2d: kernel must be square, got " + w.str());
  Conv2dGeometry g{x[0], x[1], x[2], x[3], w[0], w[2], stride, padding, 0, 0};
  const Index span_h = g.height + 2 * padding - g.kernel;
  const Index span_w = g.width + 2 * padding - g.kernel;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kernel) + " larger than padded input " + x.str());
  }
  if (span_h % stride != 0 || span_w % stride != 0) {
    throw ShapeError("conv2d: output extent is not an integer for input " + x.str() + " stride " +
                     std::to_string(stride));
  }
  g.out_height = span_h / stride + 1;
  g.out_width = span_w / stride + 1;
  return g;
}

namespace detail {

/// cols has shape (Cin*k*k, Hout*Wout) for one sample.
template <class Scalar>
void im2col(const Scalar* x, const Conv2dGeometry& g, Scalar* cols) {
  const Index positions = g.out_height * g.out_width;
  for (Index c = 0; c < g.in_channels; ++c) {
    for (Index u = 0; u < g.kernel; ++u) {
      for (Index v = 0; v < g.kernel; ++v) {
        Scalar* row = cols + ((c * g.kernel + u) * g.kernel + v) * positions;
        for (Index i = 0; i < g.out_height; ++i) {
          const Index h = i * g.stride + u - g.padding;
          for (Index j = 0; j < g.out_width; ++j) {
            const Index w = j * g.stride + v - g.padding;
            const bool inside = h >= 0 && h < g.height && w >= 0 && w < g.width;
            row[i * g.out_width + j] = inside ? x[(c * g.height + h) * g.width + w] : Scalar(0);
          }
        }
      }
    }
  }
}

template <class Scalar>
void col2im_accumulate(const Scalar* cols, const Conv2dGeometry& g, Scalar* x) {
  const Index positions = g.out_height * g.out_width;
  for (Index c = 0; c < g.in_channels; ++c) {
    for (Index u = 0; u < g.kernel; ++u) {
      for (Index v = 0; v < g.kernel; ++v) {
        const Scalar* row = cols + ((c * g.kernel + u) * g.kernel + v) * positions;
        for (Index i = 0; i < g.out_height; ++i) {
          const Index h = i * g.stride + u - g.padding;
          if (h < 0 || h >= g.height) continue;
          for (Index j = 0; j < g.out_width; ++j) {
            const Index w = j * g.stride + v - g.padding;
            if (w < 0 || w >= g.width) continue;
            x[(c * g.height + h) * g.width + w] += row[i * g.out_width + j];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with zero padding: out[b,o,i,j] = bias[o] + sum w[o,c,u,v] x[b,c,i*s+u-p,j*s+v-p].
template <class Scalar>
BasicTensor<Scalar> conv2d(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& weight, const BasicTensor<Scalar>& bias,
                           Index stride = 1, Index padding = 0) {
  const auto g = conv2d_geometry(x.shape(), weight.shape(), stride, padding);
  if (bias.shape() != Shape{g.out_channels}) {
    throw ShapeError("conv2d: bias must have shape (" + std::to_string(g.out_channels) + "), got " + bias.shape().str());
  }
  const Index positions = g.out_height * g.out_width;
  const Index patch = g.in_channels * g.kernel * g.kernel;
  BasicTensor<Scalar> out{Shape{g.batch, g.out_channels, g.out_height, g.out_width}};
  detail::RowMatrix<Scalar> cols(patch, positions);
  detail::ConstRowMap<Scalar> wm(weight.data(), g.out_channels, patch);
  const Index in_step = g.in_channels * g.height * g.width;
  for (Index b = 0; b < g.batch; ++b) {
    detail::im2col(x.data() + b * in_step, g, cols.data());
    detail::RowMap<Scalar> om(out.data() + b * g.out_channels * positions, g.out_channels, positions);
    om.noalias() = wm * cols;
    om.colwise() += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(bias.data(), g.out_channels);
  }
  return out;
}

/// Gradient of conv2d with respect to its input (transposed correlation).
template <class Scalar>
BasicTensor<Scalar> conv2d_backward_input(const BasicTensor<Scalar>& grad_out, const BasicTensor<Scalar>& weight,
                                          const Shape& input_shape, Index stride, Index padding) {
  const auto g = conv2d_geometry(input_shape, weight.shape(), stride, padding);
  const Index positions = g.out_height * g.out_width;
  const Index patch = g.in_channels * g.kernel * g.kernel;
  BasicTensor<Scalar> dx{input_shape};
  detail::RowMatrix<Scalar> cols(patch, positions);
  detail::ConstRowMap<Scalar> wm(weight.data(), g.out_channels, patch);
  const Index in_step = g.in_channels * g.height * g.width;
  for (Index b = 0; b < g.batch; ++b) {
    detail::ConstRowMap<Scalar> gm(grad_out.data() + b * g.out_channels * positions, g.out_channels, positions);
    cols.noalias() = wm.transpose() * gm;
    detail::col2im_accumulate(cols.data(), g, dx.data() + b * in_step);
  }
  return dx;
}

template <class Scalar>
BasicTensor<Scalar> conv2d_backward_weight(const BasicTensor<Scalar>& grad_out, const BasicTensor<Scalar>& x,
                                           const Shape& weight_shape, Index stride, Index padding) {
  const auto g = conv2d_geometry(x.shape(), weight_shape, stride, padding);
  const Index positions = g.out_height * g.out_width;
  const Index patch = g.in_channels * g.kernel * g.kernel;
  BasicTensor<Scalar> dw{weight_shape};
  detail::RowMap<Scalar> dwm(dw.data(), g.out_channels, patch);
  detail::RowMatrix<Scalar> cols(patch, positions);
  const Index in_step = g.in_channels * g.height * g.width;
  for (Index b = 0; b < g.batch; ++b) {
    detail::im2col(x.data() + b * in_step, g, cols.data());
    detail::ConstRowMap<Scalar> gm(grad_out.data() + b * g.out_channels * positions, g.out_channels, positions);
    dwm.noalias() += gm * cols.transpose();
  }
  return dw;
}

/// Sum of grad_out over batch and spatial axes, per output channel.
template <class Scalar>
BasicTensor<Scalar> conv2d_backward_bias(const BasicTensor<Scalar>& grad_out) {
  detail::require_rank(grad_out.shape(), 4, "conv2d_backward_bias");
  const Index batch = grad_out.shape()[0], channels = grad_out.shape()[1];
  const Index positions = grad_out.shape()[2] * grad_out.shape()[3];
  BasicTensor<Scalar> db{Shape{channels}};
  for (Index b = 0; b < batch; ++b) {
    detail::ConstRowMap<Scalar> gm(grad_out.data() + b * channels * positions, channels, positions);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(db.data(), channels) += gm.rowwise().sum();
  }
  return db;
}

// ---------------------------------------------------------------------------
// Pooling over (B, C, H, W)

/// Mean over the width axis: (B,C,H,W) -> (B,C,H,1).
template <class Scalar>
BasicTensor<Scalar> avgpool_width(const BasicTensor<Scalar>& x) {
  detail::require_rank(x.shape(), 4, "avgpool_width");
  const auto& s = x.shape();
  const Index rows = s[0] * s[1] * s[2];
  BasicTensor<Scalar> out{Shape{s[0], s[1], s[2], 1}};
  detail::ConstRowMap<Scalar> xm(x.data(), rows, s[3]);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(out.data(), rows) = xm.rowwise().mean();
  return out;
}

/// Mean over the height axis: (B,C,H,W) -> (B,C,1,W).
template <class Scalar>
BasicTensor<Scalar> avgpool_height(const BasicTensor<Scalar>& x) {
  detail::require_rank(x.shape(), 4, "avgpool_height");
  const auto& s = x.shape();
  const Index planes = s[0] * s[1];
  BasicTensor<Scalar> out{Shape{s[0], s[1], 1, s[3]}};
  for (Index p = 0; p < planes; ++p) {
    detail::ConstRowMap<Scalar> xm(x.data() + p * s[2] * s[3], s[2], s[3]);
    Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(out.data() + p * s[3], s[3]) = xm.colwise().mean();
  }
  return out;
}

/// Mean over both spatial axes: (B,C,H,W) -> (B,C,1,1).
template <class Scalar>
BasicTensor<Scalar> gap2d(const BasicTensor<Scalar>& x) {
  detail::require_rank(x.shape(), 4, "gap2d");
  const auto& s = x.shape();
  const Index planes = s[0] * s[1];
  BasicTensor<Scalar> out{Shape{s[0], s[1], 1, 1}};
  detail::ConstRowMap<Scalar> xm(x.data(), planes, s[2] * s[3]);
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(out.data(), planes) = xm.rowwise().mean();
  return out;
}

// ---------------------------------------------------------------------------
// Activations

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// Sign-split logistic; exp never sees a positive argument.
template <class Scalar>
BasicTensor<Scalar> sigmoid(const BasicTensor<Scalar>& x) {
  return BasicTensor<Scalar>(x.shape(), x.array().unaryExpr([](Scalar v) { return sigmoid(v); }));
}

template <class Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
  return BasicTensor<Scalar>(x.shape(), x.array().max(Scalar(0)));
}

template <class Scalar>
BasicTensor<Scalar> softmax_axis(const BasicTensor<Scalar>& x, Index axis) {
  axis = detail::normalize_axis(axis, x.rank(), "softmax_axis");
  const auto s = detail::split_around(x.shape(), axis);
  BasicTensor<Scalar> out{x.shape()};
  for (Index o = 0; o < s.outer; ++o) {
    for (Index in = 0; in < s.inner; ++in) {
      const Index base = o * s.extent * s.inner + in;
      Scalar m = x[base];
      for (Index k = 1; k < s.extent; ++k) m = std::max(m, x[base + k * s.inner]);
      Scalar total = 0;
      for (Index k = 0; k < s.extent; ++k) {
        const Scalar e = std::exp(x[base + k * s.inner] - m);
        out[base + k * s.inner] = e;
        total += e;
      }
      for (Index k = 0; k < s.extent; ++k) out[base + k * s.inner] /= total;
    }
  }
  return out;
}

/// log(sum(exp(x))) along the last axis of a rank-2 tensor, max-shifted.
template <class Scalar>
BasicTensor<Scalar> logsumexp_rows(const BasicTensor<Scalar>& x) {
  detail::require_rank(x.shape(), 2, "logsumexp_rows");
  const Index rows = x.shape()[0], cols = x.shape()[1];
  BasicTensor<Scalar> out{Shape{rows}};
  detail::ConstRowMap<Scalar> xm(x.data(), rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Scalar m = xm.row(r).maxCoeff();
    out[r] = m + std::log((xm.row(r).array() - m).exp().sum());
  }
  return out;
}

}  // namespace ema
