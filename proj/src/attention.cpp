#include "ema/attention.hpp"

#include <cmath>
#include <random>

namespace ema {

std::string_view to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::none:
      return "none";
    case AttentionKind::ema:
      return "ema";
    case AttentionKind::ca:
      return "ca";
    case AttentionKind::se:
      return "se";
  }
  return "?";
}

AttentionKind parse_attention_kind(std::string_view name) {
  if (name == "none") return AttentionKind::none;
  if (name == "ema") return AttentionKind::ema;
  if (name == "ca") return AttentionKind::ca;
  if (name == "se") return AttentionKind::se;
  throw ConfigError("unknown attention kind '" + std::string(name) + "' (expected none|ema|ca|se)");
}

std::string_view to_string(FusionMode mode) { return mode == FusionMode::full ? "full" : "no_cross_spatial"; }

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "full") return FusionMode::full;
  if (name == "no_cross_spatial") return FusionMode::no_cross_spatial;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected full|no_cross_spatial)");
}

namespace {

void check_divides(Index channels, Index hyper, const char* what) {
  if (hyper < 1 || channels < 1 || channels % hyper != 0) {
    throw ConfigError(std::string(what) + " " + std::to_string(hyper) + " does not divide " +
                      std::to_string(channels) + " channels");
  }
}

class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor uniform(Shape shape, Index fan_in) {
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor t{std::move(shape)};
    for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng_);
    return t;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

EmaParams ema_zeros(Index channels, Index groups) {
  check_divides(channels, groups, "groups");
  const Index c = channels / groups;
  return EmaParams{channels, groups, Tensor{Shape{c, c, 1, 1}}, Tensor{Shape{c}}, Tensor{Shape{c, c, 3, 3}},
                   Tensor{Shape{c}}};
}

EmaParams ema_init(Index channels, Index groups, std::uint64_t seed) {
  EmaParams p = ema_zeros(channels, groups);
  const Index c = p.group_channels();
  Initializer init(seed);
  p.conv1x1_weight = init.uniform(p.conv1x1_weight.shape(), c);
  p.conv3x3_weight = init.uniform(p.conv3x3_weight.shape(), c * 9);
  return p;
}

CaParams ca_zeros(Index channels, Index reduction) {
  check_divides(channels, reduction, "reduction");
  const Index mid = channels / reduction;
  return CaParams{channels,
                  reduction,
                  Tensor{Shape{mid, channels, 1, 1}},
                  Tensor{Shape{mid}},
                  Tensor{Shape{channels, mid, 1, 1}},
                  Tensor{Shape{channels}},
                  Tensor{Shape{channels, mid, 1, 1}},
                  Tensor{Shape{channels}}};
}

CaParams ca_init(Index channels, Index reduction, std::uint64_t seed) {
  CaParams p = ca_zeros(channels, reduction);
  Initializer init(seed);
  p.reduce_weight = init.uniform(p.reduce_weight.shape(), channels);
  p.height_weight = init.uniform(p.height_weight.shape(), p.mid_channels());
  p.width_weight = init.uniform(p.width_weight.shape(), p.mid_channels());
  return p;
}

SeParams se_zeros(Index channels, Index reduction) {
  check_divides(channels, reduction, "reduction");
  const Index mid = channels / reduction;
  return SeParams{channels,           reduction,           Tensor{Shape{mid, channels}},
                  Tensor{Shape{mid}}, Tensor{Shape{channels, mid}}, Tensor{Shape{channels}}};
}

SeParams se_init(Index channels, Index reduction, std::uint64_t seed) {
  SeParams p = se_zeros(channels, reduction);
  Initializer init(seed);
  p.squeeze_weight = init.uniform(p.squeeze_weight.shape(), channels);
  p.excite_weight = init.uniform(p.excite_weight.shape(), p.mid_channels());
  return p;
}

BasicEmaParams<ad::Var> on_tape(ad::Tape& tape, const EmaParams& p) {
  return {p.channels, p.groups, tape.leaf(p.conv1x1_weight, "conv1x1_weight"),
          tape.leaf(p.conv1x1_bias, "conv1x1_bias"), tape.leaf(p.conv3x3_weight, "conv3x3_weight"),
          tape.leaf(p.conv3x3_bias, "conv3x3_bias")};
}

BasicCaParams<ad::Var> on_tape(ad::Tape& tape, const CaParams& p) {
  return {p.channels,
          p.reduction,
          tape.leaf(p.reduce_weight, "reduce_weight"),
          tape.leaf(p.reduce_bias, "reduce_bias"),
          tape.leaf(p.height_weight, "height_weight"),
          tape.leaf(p.height_bias, "height_bias"),
          tape.leaf(p.width_weight, "width_weight"),
          tape.leaf(p.width_bias, "width_bias")};
}

BasicSeParams<ad::Var> on_tape(ad::Tape& tape, const SeParams& p) {
  return {p.channels,
          p.reduction,
          tape.leaf(p.squeeze_weight, "squeeze_weight"),
          tape.leaf(p.squeeze_bias, "squeeze_bias"),
          tape.leaf(p.excite_weight, "excite_weight"),
          tape.leaf(p.excite_bias, "excite_bias")};
}

Index param_count_module(AttentionKind kind, Index channels, Index hyper) {
  switch (kind) {
    case AttentionKind::none:
      return 0;
    case AttentionKind::ema: {
      check_divides(channels, hyper, "groups");
      const Index c = channels / hyper;
      return 10 * c * c + 2 * c;
    }
    case AttentionKind::ca: {
      check_divides(channels, hyper, "reduction");
      const Index mid = channels / hyper;
      return channels * mid + mid + 2 * (mid * channels + channels);
    }
    case AttentionKind::se: {
      check_divides(channels, hyper, "reduction");
      const Index mid = channels / hyper;
      return channels * mid + mid + mid * channels + channels;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------

namespace {

void require_nchw(const Shape& s, const char* what) {
  if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected (B,C,H,W), got " + s.str());
}

}  // namespace

template <class T>
T group_fold(const T& x, Index groups) {
  const Shape s = x.shape();
  require_nchw(s, "group_fold");
  if (groups < 1 || s[1] % groups != 0) {
    throw ShapeError("group_fold: " + std::to_string(groups) + " groups do not divide " + s.str());
  }
  // Row-major (B, C, H, W) viewed as (B*G, C/G, H, W) is exactly the group-to-batch fold.
  return reshape(x, Shape{s[0] * groups, s[1] / groups, s[2], s[3]});
}

template <class T>
T group_unfold(const T& xg, Index groups) {
  const Shape s = xg.shape();
  require_nchw(s, "group_unfold");
  if (groups < 1 || s[0] % groups != 0) {
    throw ShapeError("group_unfold: " + std::to_string(groups) + " groups do not divide batch of " + s.str());
  }
  return reshape(xg, Shape{s[0] / groups, s[1] * groups, s[2], s[3]});
}

template <class T>
T branch_1x1(const BasicEmaParams<T>& p, const T& xg) {
  const Shape s = xg.shape();
  require_nchw(s, "branch_1x1");
  if (s[1] != p.group_channels()) {
    throw ShapeError("branch_1x1: expected " + std::to_string(p.group_channels()) + " channels, got " + s.str());
  }
  const Index h = s[2], w = s[3];
  const T pooled_h = avgpool_width(xg);                           // (BG, c, H, 1)
  const T pooled_w = permute(avgpool_height(xg), {0, 1, 3, 2});   // (BG, c, W, 1)
  const T mixed = conv2d(concat(std::vector<T>{pooled_h, pooled_w}, 2), p.conv1x1_weight, p.conv1x1_bias, 1, 0);
  const auto parts = split(mixed, 2, {h, w});
  const T gate_h = sigmoid(parts[0]);
  const T gate_w = sigmoid(permute(parts[1], {0, 1, 3, 2}));     // (BG, c, 1, W)
  return xg * gate_h * gate_w;
}

template <class T>
T branch_3x3(const BasicEmaParams<T>& p, const T& xg) {
  return conv2d(xg, p.conv3x3_weight, p.conv3x3_bias, 1, 1);
}

template <class T>
T cross_spatial(const T& xg, const T& x1, const T& x2) {
  const Shape s = xg.shape();
  require_nchw(s, "cross_spatial");
  if (x1.shape() != s || x2.shape() != s) {
    throw ShapeError("cross_spatial: operand shapes " + s.str() + ", " + x1.shape().str() + ", " + x2.shape().str());
  }
  const Index bg = s[0], c = s[1], hw = s[2] * s[3];
  const T a1 = softmax_axis(reshape(gap2d(x1), Shape{bg, 1, c}), 2);
  const T a2 = softmax_axis(reshape(gap2d(x2), Shape{bg, 1, c}), 2);
  const T y1 = matmul_batched(a1, reshape(x2, Shape{bg, c, hw}));
  const T y2 = matmul_batched(a2, reshape(x1, Shape{bg, c, hw}));
  const T weights = sigmoid(reshape(y1 + y2, Shape{bg, 1, s[2], s[3]}));
  return xg * weights;
}

template <class T>
T ema_forward(const BasicEmaParams<T>& p, const T& x, FusionMode mode) {
  const Shape s = x.shape();
  require_nchw(s, "ema_forward");
  if (s[1] != p.channels) {
    throw ShapeError("ema_forward: module has " + std::to_string(p.channels) + " channels, input is " + s.str());
  }
  const T xg = group_fold(x, p.groups);
  const T x1 = branch_1x1(p, xg);
  const T x2 = branch_3x3(p, xg);
  const T yg = mode == FusionMode::full ? cross_spatial(xg, x1, x2) : (x1 + x2) * 0.5;
  return group_unfold(yg, p.groups);
}

template <class T>
T ca_forward(const BasicCaParams<T>& p, const T& x) {
  const Shape s = x.shape();
  require_nchw(s, "ca_forward");
  if (s[1] != p.channels) {
    throw ShapeError("ca_forward: module has " + std::to_string(p.channels) + " channels, input is " + s.str());
  }
  const Index h = s[2], w = s[3];
  const T pooled_h = avgpool_width(x);
  const T pooled_w = permute(avgpool_height(x), {0, 1, 3, 2});
  const T mixed = relu(conv2d(concat(std::vector<T>{pooled_h, pooled_w}, 2), p.reduce_weight, p.reduce_bias, 1, 0));
  const auto parts = split(mixed, 2, {h, w});
  const T gate_h = sigmoid(conv2d(parts[0], p.height_weight, p.height_bias, 1, 0));
  const T gate_w = sigmoid(conv2d(permute(parts[1], {0, 1, 3, 2}), p.width_weight, p.width_bias, 1, 0));
  return x * gate_h * gate_w;
}

template <class T>
T se_forward(const BasicSeParams<T>& p, const T& x) {
  const Shape s = x.shape();
  require_nchw(s, "se_forward");
  if (s[1] != p.channels) {
    throw ShapeError("se_forward: module has " + std::to_string(p.channels) + " channels, input is " + s.str());
  }
  const Index c = s[1], mid = p.mid_channels();
  // Fully connected layers on the pooled descriptor, expressed as 1x1 convolutions.
  const T squeeze_w = reshape(p.squeeze_weight, Shape{mid, c, 1, 1});
  const T excite_w = reshape(p.excite_weight, Shape{c, mid, 1, 1});
  const T squeezed = relu(conv2d(gap2d(x), squeeze_w, p.squeeze_bias, 1, 0));
  const T scale = sigmoid(conv2d(squeezed, excite_w, p.excite_bias, 1, 0));
  return x * scale;
}

#define EMA_INSTANTIATE(T)                                                      \
  template T group_fold<T>(const T&, Index);                                    \
  template T group_unfold<T>(const T&, Index);                                  \
  template T branch_1x1<T>(const BasicEmaParams<T>&, const T&);                 \
  template T branch_3x3<T>(const BasicEmaParams<T>&, const T&);                 \
  template T cross_spatial<T>(const T&, const T&, const T&);                    \
  template T ema_forward<T>(const BasicEmaParams<T>&, const T&, FusionMode);    \
  template T ca_forward<T>(const BasicCaParams<T>&, const T&);                  \
  template T se_forward<T>(const BasicSeParams<T>&, const T&);

EMA_INSTANTIATE(Tensor)
EMA_INSTANTIATE(ad::Var)

#undef EMA_INSTANTIATE

}  // namespace ema
