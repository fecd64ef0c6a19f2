#pragma once

// Gradient check of a single attention module against central differences.

#include <cstdint>

#include "ema/attention.hpp"
#include "ema/gradcheck.hpp"

namespace ema {

struct ModuleCheckConfig {
  AttentionKind kind = AttentionKind::ema;
  Index batch = 2;
  Index channels = 8;
  Index hyper = 4;  // groups for EMA, reduction for CA/SE
  Index height = 5;
  Index width = 7;
  FusionMode fusion = FusionMode::full;
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
};

/// "input" followed by every module buffer, all drawn from U[-1, 1].
NamedTensors module_check_inputs(const ModuleCheckConfig& cfg);

/// sum(module(input) * R) for a fixed seeded projection R.
LossBuilder module_check_loss(const ModuleCheckConfig& cfg);

GradCheckReport check_module_gradients(const ModuleCheckConfig& cfg);
/// Same inputs, caller-supplied loss; used to inject a faulty backward rule.
GradCheckReport check_module_gradients(const ModuleCheckConfig& cfg, const LossBuilder& loss);

}  // namespace ema
