#include "ema/toy_net.hpp"

#include <cmath>
#include <random>

#include "ema/error.hpp"

namespace ema {

namespace {

Tensor uniform(Shape shape, Index fan_in, std::mt19937_64& rng) {
  const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-a, a);
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

ToyNet build_toy_net(const ToyNetSpec& spec, std::uint64_t seed) {
  if (spec.in_channels < 1 || spec.width < 1 || spec.classes < 2) {
    throw ConfigError("toy net needs in_channels >= 1, width >= 1 and classes >= 2");
  }
  std::mt19937_64 rng(seed);
  ToyNet net;
  net.spec = spec;
  const Index w = spec.width;
  net.conv1_weight = uniform(Shape{w, spec.in_channels, 3, 3}, spec.in_channels * 9, rng);
  net.conv1_bias = Tensor(Shape{w});
  net.conv2_weight = uniform(Shape{w, w, 3, 3}, w * 9, rng);
  net.conv2_bias = Tensor(Shape{w});
  net.fc_weight = uniform(Shape{spec.classes, w}, w, rng);
  net.fc_bias = Tensor(Shape{spec.classes});

  const std::uint64_t attention_seed = rng();
  switch (spec.attention) {
    case AttentionKind::none:
      break;
    case AttentionKind::ema:
      net.ema = ema_init(w, spec.hyper, attention_seed);
      break;
    case AttentionKind::ca:
      net.ca = ca_init(w, spec.hyper, attention_seed);
      break;
    case AttentionKind::se:
      net.se = se_init(w, spec.hyper, attention_seed);
      break;
  }
  return net;
}

Index param_count(const ToyNet& net) {
  Index n = 0;
  net.visit([&](std::string_view, const Tensor& t) { n += t.size(); });
  return n;
}

BasicToyNet<ad::Var> on_tape(ad::Tape& tape, const ToyNet& net) {
  BasicToyNet<ad::Var> v;
  v.spec = net.spec;
  v.conv1_weight = tape.leaf(net.conv1_weight, "conv1_weight");
  v.conv1_bias = tape.leaf(net.conv1_bias, "conv1_bias");
  if (net.ema) v.ema = on_tape(tape, *net.ema);
  if (net.ca) v.ca = on_tape(tape, *net.ca);
  if (net.se) v.se = on_tape(tape, *net.se);
  v.conv2_weight = tape.leaf(net.conv2_weight, "conv2_weight");
  v.conv2_bias = tape.leaf(net.conv2_bias, "conv2_bias");
  v.fc_weight = tape.leaf(net.fc_weight, "fc_weight");
  v.fc_bias = tape.leaf(net.fc_bias, "fc_bias");
  return v;
}

template <class T>
T toy_forward(const BasicToyNet<T>& net, const T& x) {
  const Index batch = x.shape()[0];
  const Index w = net.spec.width, k = net.spec.classes;
  T h = relu(conv2d(x, net.conv1_weight, net.conv1_bias, 1, 1));
  if (net.ema) h = ema_forward(*net.ema, h, net.spec.fusion);
  if (net.ca) h = ca_forward(*net.ca, h);
  if (net.se) h = se_forward(*net.se, h);
  h = relu(conv2d(h, net.conv2_weight, net.conv2_bias, 1, 1));
  const T fc_w = reshape(net.fc_weight, Shape{k, w, 1, 1});
  return reshape(conv2d(gap2d(h), fc_w, net.fc_bias, 1, 0), Shape{batch, k});
}

template Tensor toy_forward<Tensor>(const BasicToyNet<Tensor>&, const Tensor&);
template ad::Var toy_forward<ad::Var>(const BasicToyNet<ad::Var>&, const ad::Var&);

}  // namespace ema
