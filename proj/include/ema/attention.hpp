#pragma once

// Attention modules over (B, C, H, W) feature maps: EMA and the CA / SE
// baselines. Parameter records are templated on the value type so one
// definition of each forward pass serves both plain tensors and tape
// variables (ad::Var); the forward templates are instantiated for both.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ema/tape.hpp"
#include "ema/tensor.hpp"

namespace ema {

enum class AttentionKind { none, ema, ca, se };

std::string_view to_string(AttentionKind kind);
/// Accepts "none", "ema", "ca", "se"; throws ConfigError otherwise.
AttentionKind parse_attention_kind(std::string_view name);

enum class FusionMode { full, no_cross_spatial };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

/// Ablation setting: whether cross-spatial fusion runs, and the group count.
struct EmaVariant {
  FusionMode mode = FusionMode::full;
  Index groups = 32;
};

/// EMA weights. Both kernels act on one group of c = channels / groups channels.
template <class T>
struct BasicEmaParams {
  Index channels = 0;
  Index groups = 0;
  T conv1x1_weight;  // (c, c, 1, 1)
  T conv1x1_bias;    // (c)
  T conv3x3_weight;  // (c, c, 3, 3)
  T conv3x3_bias;    // (c)

  Index group_channels() const { return channels / groups; }

  template <class F>
  void visit(F&& f) const {
    f("conv1x1_weight", conv1x1_weight);
    f("conv1x1_bias", conv1x1_bias);
    f("conv3x3_weight", conv3x3_weight);
    f("conv3x3_bias", conv3x3_bias);
  }
  template <class F>
  void visit(F&& f) {
    f("conv1x1_weight", conv1x1_weight);
    f("conv1x1_bias", conv1x1_bias);
    f("conv3x3_weight", conv3x3_weight);
    f("conv3x3_bias", conv3x3_bias);
  }
};

/// Coordinate-attention weights with reduction ratio r (mid = C / r).
template <class T>
struct BasicCaParams {
  Index channels = 0;
  Index reduction = 0;
  T reduce_weight;  // (mid, C, 1, 1)
  T reduce_bias;    // (mid)
  T height_weight;  // (C, mid, 1, 1)
  T height_bias;    // (C)
  T width_weight;   // (C, mid, 1, 1)
  T width_bias;     // (C)

  Index mid_channels() const { return channels / reduction; }

  template <class F>
  void visit(F&& f) const {
    f("reduce_weight", reduce_weight);
    f("reduce_bias", reduce_bias);
    f("height_weight", height_weight);
    f("height_bias", height_bias);
    f("width_weight", width_weight);
    f("width_bias", width_bias);
  }
  template <class F>
  void visit(F&& f) {
    f("reduce_weight", reduce_weight);
    f("reduce_bias", reduce_bias);
    f("height_weight", height_weight);
    f("height_bias", height_bias);
    f("width_weight", width_weight);
    f("width_bias", width_bias);
  }
};

/// Squeeze-and-excitation weights; the two fully connected layers are stored as matrices.
template <class T>
struct BasicSeParams {
  Index channels = 0;
  Index reduction = 0;
  T squeeze_weight;  // (C/r, C)
  T squeeze_bias;    // (C/r)
  T excite_weight;   // (C, C/r)
  T excite_bias;     // (C)

  Index mid_channels() const { return channels / reduction; }

  template <class F>
  void visit(F&& f) const {
    f("squeeze_weight", squeeze_weight);
    f("squeeze_bias", squeeze_bias);
    f("excite_weight", excite_weight);
    f("excite_bias", excite_bias);
  }
  template <class F>
  void visit(F&& f) {
    f("squeeze_weight", squeeze_weight);
    f("squeeze_bias", squeeze_bias);
    f("excite_weight", excite_weight);
    f("excite_bias", excite_bias);
  }
};

using EmaParams = BasicEmaParams<Tensor>;
using CaParams = BasicCaParams<Tensor>;
using SeParams = BasicSeParams<Tensor>;

/// Weights ~ U[-a, a] with a = sqrt(1 / fan_in), biases zero; fully determined by seed.
EmaParams ema_init(Index channels, Index groups, std::uint64_t seed);
CaParams ca_init(Index channels, Index reduction, std::uint64_t seed);
SeParams se_init(Index channels, Index reduction, std::uint64_t seed);

/// Every buffer zero; used by the closed-form fixtures.
EmaParams ema_zeros(Index channels, Index groups);
CaParams ca_zeros(Index channels, Index reduction);
SeParams se_zeros(Index channels, Index reduction);

/// Element count over every buffer of a parameter record.
template <class P>
Index buffer_elements(const P& p) {
  Index n = 0;
  p.visit([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

/// Records every buffer as a tape leaf.
BasicEmaParams<ad::Var> on_tape(ad::Tape& tape, const EmaParams& p);
BasicCaParams<ad::Var> on_tape(ad::Tape& tape, const CaParams& p);
BasicSeParams<ad::Var> on_tape(ad::Tape& tape, const SeParams& p);

/// Parameters per module: EMA 10c^2 + 2c (c = C/G); CA 3C^2/r + C/r + 2C; SE 2C^2/r + C/r + C.
Index param_count_module(AttentionKind kind, Index channels, Index hyper);

// ---------------------------------------------------------------------------
// Forward passes. T is Tensor or ad::Var.

/// (B, C, H, W) -> (B*G, C/G, H, W); sample b, group g lands at folded index b*G + g.
template <class T>
T group_fold(const T& x, Index groups);
template <class T>
T group_unfold(const T& xg, Index groups);

/// Directional pooling, shared 1x1 conv, two sigmoid gates multiplied into xg.
template <class T>
T branch_1x1(const BasicEmaParams<T>& p, const T& xg);

/// Single 3x3 conv, stride 1, padding 1.
template <class T>
T branch_3x3(const BasicEmaParams<T>& p, const T& xg);

/// Channel-softmax global descriptor of each branch times the flattened map of the
/// other; the sigmoid of the summed maps gates xg per pixel.
template <class T>
T cross_spatial(const T& xg, const T& x1, const T& x2);

template <class T>
T ema_forward(const BasicEmaParams<T>& p, const T& x, FusionMode mode = FusionMode::full);

template <class T>
T ca_forward(const BasicCaParams<T>& p, const T& x);

template <class T>
T se_forward(const BasicSeParams<T>& p, const T& x);

}  // namespace ema
