#include <doctest.h>

#include <random>

#include "ema/gradcheck.hpp"
#include "ema/tape.hpp"
#include "oracles.hpp"

using namespace ema;
using ad::Tape;
using ad::Var;

namespace {

/// Checks a unary-input expression against central differences.
void expect_gradients(const NamedTensors& inputs, const LossBuilder& loss, double tol = 1e-6) {
  const GradCheckReport r = check_gradients(loss, inputs);
  INFO("max relative error " << r.max_relative_error);
  CHECK(r.max_relative_error < tol);
}

Tensor rnd(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor(std::move(s), rng, lo, hi);
}

}  // namespace

TEST_CASE("leaf gradient of a sum is ones") {
  Tape tape;
  const Var x = tape.leaf(rnd(Shape{2, 3}, 1));
  const auto g = tape.backward(ad::sum(x));
  CHECK(g[x] == Tensor::ones(Shape{2, 3}));
}

TEST_CASE("gradients accumulate across fan-out") {
  Tape tape;
  const Var x = tape.leaf(Tensor(Shape{2}, {1.5, -2.0}));
  const Var y = x * x + x;
  const auto g = tape.backward(ad::sum(y));
  CHECK(g[x] == Tensor(Shape{2}, {4.0, -3.0}));
}

TEST_CASE("unrelated leaves read zero gradient") {
  Tape tape;
  const Var x = tape.leaf(Tensor(Shape{2}, {1, 2}));
  const Var unused = tape.leaf(Tensor(Shape{3}));
  const auto g = tape.backward(ad::sum(x));
  CHECK(g[unused] == Tensor(Shape{3}));
  CHECK_FALSE(g.has(unused.id()));
}

TEST_CASE("replay reproduces recorded values bit for bit") {
  Tape tape;
  const Var x = tape.leaf(rnd(Shape{1, 2, 3, 3}, 2));
  const Var w = tape.leaf(rnd(Shape{2, 2, 3, 3}, 3));
  const Var b = tape.leaf(rnd(Shape{2}, 4));
  const Var y = ad::sigmoid(ad::conv2d(x, w, b, 1, 1));
  (void)ad::sum_squares(y);
  CHECK(tape.replay_matches());
}

TEST_CASE("set_leaf validates shape and leaf-ness") {
  Tape tape;
  const Var x = tape.leaf(Tensor(Shape{2}));
  const Var y = ad::sum(x);
  CHECK_THROWS_AS(tape.set_leaf(x.id(), Tensor(Shape{3})), ShapeError);
  CHECK_THROWS_AS(tape.set_leaf(y.id(), Tensor(Shape{})), TapeError);
}

TEST_CASE("finite differences of elementary ops") {
  SUBCASE("broadcast binary ops") {
    expect_gradients({{"a", rnd(Shape{2, 3}, 5)}, {"b", rnd(Shape{1, 3}, 6)}},
                     [](Tape&, const std::vector<Var>& v) { return ad::sum_squares((v[0] - v[1]) * v[0] + v[1]); });
  }
  SUBCASE("scale") {
    expect_gradients({{"a", rnd(Shape{4}, 7)}}, [](Tape&, const std::vector<Var>& v) {
      return ad::sum_squares(2.5 * v[0]);
    });
  }
  SUBCASE("reshape, permute, concat, split, slice") {
    expect_gradients({{"a", rnd(Shape{2, 3, 4}, 8)}, {"b", rnd(Shape{2, 3, 2}, 9)}},
                     [](Tape&, const std::vector<Var>& v) {
                       const Var c = ad::concat({v[0], v[1]}, 2);
                       const Var p = ad::permute(c, {2, 0, 1});
                       const auto parts = ad::split(p, 0, {1, 5});
                       const Var r = ad::reshape(parts[1], Shape{5, 6});
                       return ad::sum_squares(ad::slice(r, 1, 2, 3) * ad::slice(r, 1, 0, 3));
                     });
  }
  SUBCASE("batched matmul") {
    expect_gradients({{"a", rnd(Shape{2, 3, 4}, 10)}, {"b", rnd(Shape{2, 4, 5}, 11)}},
                     [](Tape&, const std::vector<Var>& v) { return ad::sum_squares(ad::matmul_batched(v[0], v[1])); });
  }
  SUBCASE("strided padded conv2d") {
    expect_gradients({{"x", rnd(Shape{2, 2, 5, 5}, 12)}, {"w", rnd(Shape{3, 2, 3, 3}, 13)}, {"b", rnd(Shape{3}, 14)}},
                     [](Tape&, const std::vector<Var>& v) { return ad::sum_squares(ad::conv2d(v[0], v[1], v[2], 2, 1)); });
  }
  SUBCASE("pools") {
    expect_gradients({{"x", rnd(Shape{2, 3, 4, 5}, 15)}}, [](Tape&, const std::vector<Var>& v) {
      return ad::sum_squares(ad::avgpool_width(v[0])) + ad::sum_squares(ad::avgpool_height(v[0])) +
             ad::sum_squares(ad::gap2d(v[0]));
    });
  }
  SUBCASE("sigmoid, relu, softmax") {
    // Values bounded away from zero keep relu's kink out of the stencil.
    Tensor x = rnd(Shape{3, 4}, 16, 0.1, 1.0);
    for (Index i = 0; i < x.size(); i += 2) x[i] = -x[i];
    expect_gradients({{"x", x}}, [](Tape& t, const std::vector<Var>& v) {
      const Var w = t.leaf(rnd(Shape{3, 4}, 17));
      return ad::sum(ad::softmax_axis(v[0], 1) * w) + ad::sum_squares(ad::relu(v[0])) +
             ad::sum_squares(ad::sigmoid(v[0]));
    });
  }
  SUBCASE("softmax cross-entropy") {
    const std::vector<int> labels{2, 0, 1};
    expect_gradients({{"logits", rnd(Shape{3, 4}, 18, -3, 3)}}, [labels](Tape&, const std::vector<Var>& v) {
      return ad::softmax_cross_entropy(v[0], labels);
    });
  }
}

TEST_CASE("cross-entropy value equals log-sum-exp minus the labelled logit") {
  Tape tape;
  const Tensor z(Shape{2, 3}, {1, 2, 3, 1000, 0, -1000});
  const std::vector<int> labels{0, 0};
  const Var loss = ad::softmax_cross_entropy(tape.leaf(z), labels);
  const double expected = ((std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 1.0) + 0.0) / 2.0;
  CHECK(loss.value()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK_THROWS(ad::softmax_cross_entropy(tape.leaf(z), std::vector<int>{0, 3}));
}

TEST_CASE("finite differences flag a wrong gradient") {
  // A deliberately wrong backward rule: claims d(x^2)/dx = x.
  auto faulty_square = [](const Var& x) {
    return x.tape().apply(
        "faulty_square", {x}, [](ad::Inputs in) { return *in[0] * *in[0]; },
        [](ad::Inputs in, const Tensor&, const Tensor& g) { return std::vector<Tensor>{g * *in[0]}; });
  };
  const auto r = check_gradients([&](Tape&, const std::vector<Var>& v) { return ad::sum(faulty_square(v[0])); },
                                 {{"x", rnd(Shape{5}, 19)}});
  CHECK_FALSE(r.pass);
  CHECK(r.max_relative_error > 0.3);
}

TEST_CASE("finite_diff_gradient of a quadratic") {
  const Tensor x(Shape{3}, {1, -2, 0.5});
  const Tensor g = finite_diff_gradient([](const Tensor& t) { return (t.array() * t.array()).sum(); }, x);
  CHECK(max_abs_diff(g, x * 2.0) < 1e-8);
  CHECK_THROWS_AS(finite_diff_gradient([](const Tensor&) { return std::nan(""); }, x), NumericError);
}
