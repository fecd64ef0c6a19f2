#include <cmath>

#include "ema/tape.hpp"

namespace ema::ad {

namespace {

using Grads = std::vector<Tensor>;

/// Adjoint of slice: places g into a zero tensor of `full` shape.
Tensor unslice(const Tensor& g, const Shape& full, Index axis, Index start) {
  const auto s = detail::split_around(full, axis);
  const Index len = g.shape()[axis];
  Tensor out{full};
  for (Index o = 0; o < s.outer; ++o) {
    const double* src = g.data() + o * len * s.inner;
    std::copy(src, src + len * s.inner, out.data() + (o * s.extent + start) * s.inner);
  }
  return out;
}

/// Spreads g (a pooled tensor) back over `full`, scaled by 1/count.
Tensor spread(const Tensor& g, const Shape& full, double count) {
  return broadcast_binary(Tensor::constant(full, 1.0 / count), g, BinaryOp::mul);
}

}  // namespace

Var reshape(const Var& x, Shape shape) {
  if (shape.numel() != x.shape().numel()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  return x.tape().apply(
      "reshape", {x}, [shape](Inputs in) { return ema::reshape(*in[0], shape); },
      [](Inputs in, const Tensor&, const Tensor& g) { return Grads{ema::reshape(g, in[0]->shape())}; });
}

Var permute(const Var& x, std::vector<Index> axes) {
  const Index rank = x.shape().rank();
  std::vector<bool> seen(axes.size(), false);
  for (Index a : axes) {
    if (static_cast<Index>(axes.size()) != rank || a < 0 || a >= rank || seen[static_cast<std::size_t>(a)]) {
      throw AxisError("permute: axes are not a permutation of 0..rank-1");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  auto inverse = inverse_permutation(axes);
  return x.tape().apply(
      "permute", {x}, [axes](Inputs in) { return ema::permute(*in[0], std::span<const Index>(axes)); },
      [inverse](Inputs, const Tensor&, const Tensor& g) {
        return Grads{ema::permute(g, std::span<const Index>(inverse))};
      });
}

Var concat(std::span<const Var> parts, Index axis) {
  if (parts.empty()) throw ShapeError("concat: no parts");
  Tape& tape = parts[0].tape();
  const Index ax = detail::normalize_axis(axis, parts[0].shape().rank(), "concat");
  return tape.apply(
      "concat", parts,
      [ax](Inputs in) {
        std::vector<Tensor> vals;
        vals.reserve(in.size());
        for (const Tensor* t : in) vals.push_back(*t);
        return ema::concat(vals, ax);
      },
      [ax](Inputs in, const Tensor&, const Tensor& g) {
        std::vector<Index> sizes;
        for (const Tensor* t : in) sizes.push_back(t->shape()[ax]);
        return ema::split(g, ax, std::span<const Index>(sizes));
      });
}

Var concat(std::initializer_list<Var> parts, Index axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var slice(const Var& x, Index axis, Index start, Index length) {
  const Index ax = detail::normalize_axis(axis, x.shape().rank(), "slice");
  return x.tape().apply(
      "slice", {x}, [=](Inputs in) { return ema::slice(*in[0], ax, start, length); },
      [=](Inputs in, const Tensor&, const Tensor& g) { return Grads{unslice(g, in[0]->shape(), ax, start)}; });
}

std::vector<Var> split(const Var& x, Index axis, std::span<const Index> sizes) {
  const Index ax = detail::normalize_axis(axis, x.shape().rank(), "split");
  Index total = 0;
  for (Index s : sizes) total += s;
  if (total != x.shape()[ax]) {
    throw ShapeError("split: sizes sum to " + std::to_string(total) + " but extent is " +
                     std::to_string(x.shape()[ax]));
  }
  std::vector<Var> out;
  Index start = 0;
  for (Index len : sizes) {
    out.push_back(slice(x, ax, start, len));
    start += len;
  }
  return out;
}

std::vector<Var> split(const Var& x, Index axis, std::initializer_list<Index> sizes) {
  return split(x, axis, std::span<const Index>(sizes.begin(), sizes.size()));
}

Var broadcast_binary(const Var& a, const Var& b, BinaryOp kind) {
  (void)broadcast_shape(a.shape(), b.shape());
  const char* name = kind == BinaryOp::add ? "add" : kind == BinaryOp::sub ? "sub" : "mul";
  return a.tape().apply(
      name, {a, b}, [kind](Inputs in) { return ema::broadcast_binary(*in[0], *in[1], kind); },
      [kind](Inputs in, const Tensor&, const Tensor& g) {
        const Shape& sa = in[0]->shape();
        const Shape& sb = in[1]->shape();
        switch (kind) {
          case BinaryOp::add:
            return Grads{sum_to_shape(g, sa), sum_to_shape(g, sb)};
          case BinaryOp::sub:
            return Grads{sum_to_shape(g, sa), sum_to_shape(g * -1.0, sb)};
          case BinaryOp::mul:
            break;
        }
        return Grads{sum_to_shape(g * *in[1], sa), sum_to_shape(g * *in[0], sb)};
      });
}

Var operator+(const Var& a, const Var& b) { return broadcast_binary(a, b, BinaryOp::add); }
Var operator-(const Var& a, const Var& b) { return broadcast_binary(a, b, BinaryOp::sub); }
Var operator*(const Var& a, const Var& b) { return broadcast_binary(a, b, BinaryOp::mul); }

Var operator*(const Var& a, double s) {
  return a.tape().apply(
      "scale", {a}, [s](Inputs in) { return *in[0] * s; },
      [s](Inputs, const Tensor&, const Tensor& g) { return Grads{g * s}; });
}

Var operator*(double s, const Var& a) { return a * s; }

Var matmul_batched(const Var& a, const Var& b) {
  return a.tape().apply(
      "matmul_batched", {a, b}, [](Inputs in) { return ema::matmul_batched(*in[0], *in[1]); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        return Grads{ema::matmul_batched(g, *in[1], false, true), ema::matmul_batched(*in[0], g, true, false)};
      });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, Index stride, Index padding) {
  return x.tape().apply(
      "conv2d", {x, weight, bias},
      [=](Inputs in) { return ema::conv2d(*in[0], *in[1], *in[2], stride, padding); },
      [=](Inputs in, const Tensor&, const Tensor& g) {
        return Grads{conv2d_backward_input(g, *in[1], in[0]->shape(), stride, padding),
                     conv2d_backward_weight(g, *in[0], in[1]->shape(), stride, padding), conv2d_backward_bias(g)};
      });
}

Var avgpool_width(const Var& x) {
  return x.tape().apply(
      "avgpool_width", {x}, [](Inputs in) { return ema::avgpool_width(*in[0]); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        const Shape& s = in[0]->shape();
        return Grads{spread(g, s, static_cast<double>(s[3]))};
      });
}

Var avgpool_height(const Var& x) {
  return x.tape().apply(
      "avgpool_height", {x}, [](Inputs in) { return ema::avgpool_height(*in[0]); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        const Shape& s = in[0]->shape();
        return Grads{spread(g, s, static_cast<double>(s[2]))};
      });
}

Var gap2d(const Var& x) {
  return x.tape().apply(
      "gap2d", {x}, [](Inputs in) { return ema::gap2d(*in[0]); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        const Shape& s = in[0]->shape();
        return Grads{spread(g, s, static_cast<double>(s[2] * s[3]))};
      });
}

Var sigmoid(const Var& x) {
  return x.tape().apply(
      "sigmoid", {x}, [](Inputs in) { return ema::sigmoid(*in[0]); },
      [](Inputs, const Tensor& y, const Tensor& g) {
        return Grads{Tensor(y.shape(), g.array() * y.array() * (1.0 - y.array()))};
      });
}

Var relu(const Var& x) {
  return x.tape().apply(
      "relu", {x}, [](Inputs in) { return ema::relu(*in[0]); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        return Grads{Tensor(g.shape(), (in[0]->array() > 0.0).select(g.array(), 0.0))};
      });
}

Var softmax_axis(const Var& x, Index axis) {
  const Index ax = detail::normalize_axis(axis, x.shape().rank(), "softmax_axis");
  return x.tape().apply(
      "softmax_axis", {x}, [ax](Inputs in) { return ema::softmax_axis(*in[0], ax); },
      [ax](Inputs, const Tensor& y, const Tensor& g) {
        // dx = y * (g - <g, y>) per slice along the axis
        const auto s = detail::split_around(y.shape(), ax);
        Tensor dx{y.shape()};
        for (Index o = 0; o < s.outer; ++o) {
          for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.extent * s.inner + i;
            double dot = 0.0;
            for (Index k = 0; k < s.extent; ++k) dot += g[base + k * s.inner] * y[base + k * s.inner];
            for (Index k = 0; k < s.extent; ++k) {
              dx[base + k * s.inner] = y[base + k * s.inner] * (g[base + k * s.inner] - dot);
            }
          }
        }
        return Grads{std::move(dx)};
      });
}

Var sum(const Var& x) {
  return x.tape().apply(
      "sum", {x}, [](Inputs in) { return Tensor(Shape{}, {in[0]->array().sum()}); },
      [](Inputs in, const Tensor&, const Tensor& g) { return Grads{Tensor::constant(in[0]->shape(), g[0])}; });
}

Var sum_squares(const Var& x) {
  return x.tape().apply(
      "sum_squares", {x}, [](Inputs in) { return Tensor(Shape{}, {in[0]->array().square().sum()}); },
      [](Inputs in, const Tensor&, const Tensor& g) {
        return Grads{Tensor(in[0]->shape(), in[0]->array() * (2.0 * g[0]))};
      });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.rank() != 2 || s[0] != static_cast<Index>(labels.size())) {
    throw ShapeError("softmax_cross_entropy: logits " + s.str() + " vs " + std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || l >= s[1]) throw ShapeError("softmax_cross_entropy: label " + std::to_string(l) + " out of range");
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape().apply(
      "softmax_cross_entropy", {logits},
      [y](Inputs in) {
        const Tensor& z = *in[0];
        const Tensor lse = logsumexp_rows(z);
        const Index k = z.shape()[1];
        double total = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) total += lse[static_cast<Index>(i)] - z[static_cast<Index>(i) * k + y[i]];
        return Tensor(Shape{}, {total / static_cast<double>(y.size())});
      },
      [y](Inputs in, const Tensor&, const Tensor& g) {
        const Tensor& z = *in[0];
        const Index k = z.shape()[1];
        Tensor p = softmax_axis(z, 1);
        for (std::size_t i = 0; i < y.size(); ++i) p[static_cast<Index>(i) * k + y[i]] -= 1.0;
        return Grads{p * (g[0] / static_cast<double>(y.size()))};
      });
}

}  // namespace ema::ad
