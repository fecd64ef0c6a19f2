#pragma once

#include <cstdint>
#include <vector>

#include "ema/attention.hpp"

namespace ema {

struct BenchShape {
  Index batch = 1;
  Index channels = 256;
  Index height = 32;
  Index width = 32;
};

struct BenchConfig {
  Index groups = 32;
  FusionMode fusion = FusionMode::full;
  Index repetitions = 30;
  Index warmup = 5;
  std::uint64_t seed = 0;
};

struct BenchRow {
  BenchShape shape;
  Index groups = 0;
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  Index repetitions = 0;
};

/// Bottleneck outputs of the four ResNet stages: C = 256, 512, 1024, 2048 at
/// input_hw, input_hw/2, input_hw/4, input_hw/8.
std::vector<BenchShape> resnet_stage_shapes(Index input_hw, Index batch = 1);

/// Median of a sample; the mean of the two middle values for even sizes.
double median(std::vector<double> samples);

/// Wall time of ema_forward per shape. Throws ConfigError for fewer than 30
/// repetitions or 5 warm-ups, or a group count that does not divide a shape.
std::vector<BenchRow> bench_ema(const std::vector<BenchShape>& shapes, const BenchConfig& cfg);

}  // namespace ema
