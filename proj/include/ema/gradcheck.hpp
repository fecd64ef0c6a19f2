#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ema/tape.hpp"
#include "ema/tensor.hpp"

namespace ema {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every element of x.
/// Throws NumericError if f returns a non-finite value.
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-12);

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;
  Index compared = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  Index compared = 0;
  double max_relative_error = 0.0;
  double step = 1e-5;
  double tolerance = 1e-4;
  bool pass = false;
};

/// Named leaf values a loss is built from.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Builds a scalar loss on `tape` from leaves bound in the same order as the named inputs.
using LossBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Compares tape gradients against central differences for every named input.
GradCheckReport check_gradients(const LossBuilder& loss, const NamedTensors& inputs, double step = 1e-5,
                                double tolerance = 1e-4);

}  // namespace ema
