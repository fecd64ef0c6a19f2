#pragma once

// Symbolic backbones for parameter and multiply-accumulate accounting.
// Nothing here executes; layers only carry enough shape information to count.

#include <string>
#include <string_view>
#include <vector>

#include "ema/attention.hpp"
#include "ema/tensor.hpp"

namespace ema {

enum class LayerKind { conv, batchnorm, fc, attention, add, pool, activation };

std::string_view to_string(LayerKind kind);

/// Producer id meaning "the graph input".
inline constexpr int kGraphInput = -1;

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int id = 0;
  std::vector<int> inputs;  // producer ids; add layers have two
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 1;  // pool: 0 means global
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
  bool bias = false;
  AttentionKind attention = AttentionKind::none;
  Index hyper = 0;
  std::string stage;
  /// Bottleneck / inverted-residual output where attach_attention inserts a module.
  bool attention_site = false;
};

struct ModelGraph {
  std::string name;
  Index input_channels = 3;
  std::vector<LayerSpec> layers;
};

/// Per-layer cost at a given input resolution.
struct LayerCost {
  Index params = 0;
  Index macs = 0;
  Index out_channels = 0;
  Index out_height = 0;
  Index out_width = 0;
};

struct StageCost {
  std::string stage;
  Index params = 0;
  Index macs = 0;
};

struct ComplexityReport {
  std::string model;
  Index input_height = 0;
  Index input_width = 0;
  Index total_params = 0;
  Index total_macs = 0;
  std::vector<StageCost> stages;  // in first-appearance order
  std::vector<LayerCost> layers;  // parallel to ModelGraph::layers
};

/// CIFAR variants: 3x3 stride-1 stem, no max-pool, bottleneck stages [3,4,6,3] / [3,4,23,3].
ModelGraph build_resnet50_cifar(Index num_classes);
ModelGraph build_resnet101_cifar(Index num_classes);
/// Width-1.0 inverted-residual network with a 1280-wide head.
ModelGraph build_mobilenetv2(Index num_classes);

/// How attach_attention treats a hyperparameter that does not divide a block width.
enum class HyperPolicy {
  strict,  // ConfigError
  gcd,     // use gcd(width, hyper) for that block
};

/// Inserts one attention layer after every attention site, before the residual add.
ModelGraph attach_attention(const ModelGraph& g, AttentionKind kind, Index hyper,
                            HyperPolicy policy = HyperPolicy::strict);

/// Throws GraphError unless every layer's inputs exist earlier and channel counts agree.
void validate(const ModelGraph& g);

Index layer_params(const LayerSpec& layer);

Index count_params(const ModelGraph& g);
Index count_macs(const ModelGraph& g, Index input_height, Index input_width);
ComplexityReport analyze(const ModelGraph& g, Index input_height, Index input_width);

/// One line per layer: kind, channels, kernel, stride, params, MACs.
std::string export_text(const ModelGraph& g, Index input_height, Index input_width);

}  // namespace ema
