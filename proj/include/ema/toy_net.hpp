#pragma once

// Small CNN used for end-to-end training checks:
//   conv3x3(in->width) -> relu -> [attention] -> conv3x3(width->width) -> relu -> gap -> fc(width->classes)

#include <cstdint>
#include <optional>

#include "ema/attention.hpp"
#include "ema/tape.hpp"

namespace ema {

struct ToyNetSpec {
  AttentionKind attention = AttentionKind::none;
  Index hyper = 0;  // groups for EMA, reduction for CA/SE
  FusionMode fusion = FusionMode::full;
  Index in_channels = 3;
  Index width = 16;
  Index classes = 4;
};

template <class T>
struct BasicToyNet {
  ToyNetSpec spec;
  T conv1_weight, conv1_bias;
  T conv2_weight, conv2_bias;
  T fc_weight, fc_bias;  // (classes, width), (classes)
  std::optional<BasicEmaParams<T>> ema;
  std::optional<BasicCaParams<T>> ca;
  std::optional<BasicSeParams<T>> se;

  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }

 private:
  template <class Self, class F>
  static void visit_impl(Self& self, F& f) {
    f("conv1_weight", self.conv1_weight);
    f("conv1_bias", self.conv1_bias);
    if (self.ema) self.ema->visit(f);
    if (self.ca) self.ca->visit(f);
    if (self.se) self.se->visit(f);
    f("conv2_weight", self.conv2_weight);
    f("conv2_bias", self.conv2_bias);
    f("fc_weight", self.fc_weight);
    f("fc_bias", self.fc_bias);
  }
};

using ToyNet = BasicToyNet<Tensor>;

/// Throws ConfigError when the hyperparameter does not fit the trunk width.
ToyNet build_toy_net(const ToyNetSpec& spec, std::uint64_t seed);

Index param_count(const ToyNet& net);

BasicToyNet<ad::Var> on_tape(ad::Tape& tape, const ToyNet& net);

/// (B, in_channels, H, W) -> logits (B, classes).
template <class T>
T toy_forward(const BasicToyNet<T>& net, const T& x);

}  // namespace ema
