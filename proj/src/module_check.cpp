#include "ema/module_check.hpp"

#include <random>

namespace ema {

namespace {

void fill_uniform(Tensor& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
}

template <class P>
NamedTensors named_buffers(P params, Tensor input, std::mt19937_64& rng) {
  NamedTensors out;
  out.emplace_back("input", std::move(input));
  params.visit([&](std::string_view name, Tensor& t) {
    fill_uniform(t, rng);
    out.emplace_back(std::string(name), t);
  });
  return out;
}

/// Rebinds tape leaves (after the input) to the fields of a Var parameter record.
template <class P>
P bind(P p, const std::vector<ad::Var>& vars) {
  std::size_t k = 1;
  p.visit([&](std::string_view, ad::Var& v) { v = vars.at(k++); });
  return p;
}

template <class T>
BasicEmaParams<T> ema_shell(Index c, Index g) {
  return {c, g, {}, {}, {}, {}};
}
template <class T>
BasicCaParams<T> ca_shell(Index c, Index r) {
  return {c, r, {}, {}, {}, {}, {}, {}};
}
template <class T>
BasicSeParams<T> se_shell(Index c, Index r) {
  return {c, r, {}, {}, {}, {}};
}

}  // namespace

NamedTensors module_check_inputs(const ModuleCheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  Tensor input(Shape{cfg.batch, cfg.channels, cfg.height, cfg.width});
  fill_uniform(input, rng);
  switch (cfg.kind) {
    case AttentionKind::ema:
      return named_buffers(ema_zeros(cfg.channels, cfg.hyper), std::move(input), rng);
    case AttentionKind::ca:
      return named_buffers(ca_zeros(cfg.channels, cfg.hyper), std::move(input), rng);
    case AttentionKind::se:
      return named_buffers(se_zeros(cfg.channels, cfg.hyper), std::move(input), rng);
    case AttentionKind::none:
      break;
  }
  throw ConfigError("gradient check needs an attention kind other than 'none'");
}

LossBuilder module_check_loss(const ModuleCheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor projection(Shape{cfg.batch, cfg.channels, cfg.height, cfg.width});
  fill_uniform(projection, rng);

  return [cfg, projection](ad::Tape& tape, const std::vector<ad::Var>& vars) {
    const ad::Var& x = vars.at(0);
    ad::Var out;
    switch (cfg.kind) {
      case AttentionKind::ema:
        out = ema_forward(bind(ema_shell<ad::Var>(cfg.channels, cfg.hyper), vars), x, cfg.fusion);
        break;
      case AttentionKind::ca:
        out = ca_forward(bind(ca_shell<ad::Var>(cfg.channels, cfg.hyper), vars), x);
        break;
      case AttentionKind::se:
        out = se_forward(bind(se_shell<ad::Var>(cfg.channels, cfg.hyper), vars), x);
        break;
      case AttentionKind::none:
        throw ConfigError("gradient check needs an attention kind other than 'none'");
    }
    return ad::sum(out * tape.leaf(projection, "projection"));
  };
}

GradCheckReport check_module_gradients(const ModuleCheckConfig& cfg) {
  return check_module_gradients(cfg, module_check_loss(cfg));
}

GradCheckReport check_module_gradients(const ModuleCheckConfig& cfg, const LossBuilder& loss) {
  return check_gradients(loss, module_check_inputs(cfg), cfg.step, cfg.tolerance);
}

}  // namespace ema
