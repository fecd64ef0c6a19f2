#include "ema/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ema {

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_gradient: step must be positive");
  Tensor grad{x.shape()};
  Tensor probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_gradient: non-finite function value at element " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport check_gradients(const LossBuilder& loss, const NamedTensors& inputs, double step, double tolerance) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  leaves.reserve(inputs.size());
  for (const auto& [name, value] : inputs) leaves.push_back(tape.leaf(value, name));
  const ad::Var out = loss(tape, leaves);
  if (out.shape().numel() != 1) throw ShapeError("check_gradients: loss must be scalar, got " + out.shape().str());
  if (!out.value().all_finite()) throw NumericError("check_gradients: loss is not finite");

  const auto grads = tape.backward(out.id(), Tensor::ones(out.shape()));

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const ad::NodeId id = leaves[k].id();
    const Tensor analytic = grads.at(id);
    if (!analytic.all_finite()) throw NumericError("check_gradients: non-finite gradient for " + inputs[k].first);

    // Perturb through the tape itself: overwrite the leaf, replay, read the loss.
    auto f = [&](const Tensor& v) {
      tape.set_leaf(id, v);
      tape.replay();
      return tape.value(out.id())[0];
    };
    const Tensor numeric = finite_diff_gradient(f, inputs[k].second, step);
    tape.set_leaf(id, inputs[k].second);
    tape.replay();

    ParamCheck pc{inputs[k].first, 0.0, analytic.size()};
    for (Index i = 0; i < analytic.size(); ++i) {
      pc.max_relative_error = std::max(pc.max_relative_error, relative_error(analytic[i], numeric[i]));
    }
    report.compared += pc.compared;
    report.max_relative_error = std::max(report.max_relative_error, pc.max_relative_error);
    report.params.push_back(std::move(pc));
  }
  report.pass = report.max_relative_error < tolerance;
  return report;
}

}  // namespace ema
