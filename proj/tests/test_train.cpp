#include <doctest.h>

#include <random>

#include "ema/train.hpp"
#include "oracles.hpp"

using namespace ema;

TEST_CASE("toy net parameter counts") {
  // conv 3->16 (432+16) + conv 16->16 (2304+16) + fc 16->4 (64+4).
  CHECK(param_count(build_toy_net({}, 0)) == 2836);
  ToyNetSpec ema;
  ema.attention = AttentionKind::ema;
  ema.hyper = 8;
  CHECK(param_count(build_toy_net(ema, 0)) == 2836 + 44);
  ema.hyper = 4;
  CHECK(param_count(build_toy_net(ema, 0)) == 2836 + 10 * 16 + 2 * 4);
  ema.hyper = 3;
  CHECK_THROWS_AS(build_toy_net(ema, 0), ConfigError);
}

TEST_CASE("toy forward produces logits on both value and tape paths") {
  ToyNetSpec spec;
  spec.attention = AttentionKind::ca;
  spec.hyper = 4;
  const ToyNet net = build_toy_net(spec, 3);
  std::mt19937_64 rng(1);
  const Tensor x = oracle::random_tensor(Shape{5, 3, 8, 8}, rng, 0, 1);
  const Tensor logits = toy_forward(net, x);
  CHECK(logits.shape() == Shape{5, 4});
  ad::Tape tape;
  const auto vars = on_tape(tape, net);
  CHECK(toy_forward(vars, tape.leaf(x)).value() == logits);
}

TEST_CASE("same seed gives the same initial loss") {
  const Dataset d = synth_quadrant(64, 1, 8, 8);
  ToyNetSpec spec;
  spec.attention = AttentionKind::ema;
  spec.hyper = 8;
  CHECK(evaluate(build_toy_net(spec, 9), d).loss == evaluate(build_toy_net(spec, 9), d).loss);
  CHECK(evaluate(build_toy_net(spec, 9), d).loss != evaluate(build_toy_net(spec, 10), d).loss);
}

TEST_CASE("sgd_step update rules") {
  Tensor theta(Shape{3}, {1.0, -2.0, 0.5});
  const Tensor g(Shape{3}, {0.3, 0.1, -0.2});
  std::vector<Tensor*> params{&theta};
  std::vector<Tensor> grads{g};
  std::vector<Tensor> velocity{Tensor(Shape{3})};

  SUBCASE("zero learning rate leaves parameters unchanged") {
    TrainConfig cfg;
    cfg.lr = 0.0;
    const Tensor before = theta;
    sgd_step(params, grads, velocity, cfg);
    CHECK(theta == before);
  }
  SUBCASE("no momentum, no decay is plain descent") {
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    const Tensor expected = theta - g * 0.1;
    sgd_step(params, grads, velocity, cfg);
    CHECK(theta == expected);
  }
  SUBCASE("two momentum steps against a scalar simulation") {
    TrainConfig cfg;
    cfg.lr = 0.1;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.01;
    Tensor sim = theta;
    Tensor v(Shape{3});
    for (int step = 0; step < 2; ++step) {
      for (Index i = 0; i < 3; ++i) {
        v[i] = 0.9 * v[i] + (g[i] + 0.01 * sim[i]);
        sim[i] -= 0.1 * v[i];
      }
    }
    sgd_step(params, grads, velocity, cfg);
    sgd_step(params, grads, velocity, cfg);
    CHECK(max_abs_diff(theta, sim) < 1e-15);
  }
  SUBCASE("shape mismatch") {
    std::vector<Tensor> bad{Tensor(Shape{2})};
    CHECK_THROWS_AS(sgd_step(params, bad, velocity, TrainConfig{}), ShapeError);
  }
}

TEST_CASE("a tiny step along the gradient does not increase a sample's loss") {
  ToyNetSpec spec;
  spec.attention = AttentionKind::ema;
  spec.hyper = 8;
  const Dataset d = synth_quadrant(8, 4, 8, 8);
  for (Index i = 0; i < d.size(); ++i) {
    ToyNet net = build_toy_net(spec, 2);
    const Dataset one = take(d, i, 1);
    ad::Tape tape;
    const auto vars = on_tape(tape, net);
    const ad::Var loss = ad::softmax_cross_entropy(toy_forward(vars, tape.leaf(one.images)), one.labels);
    const auto grads = tape.backward(loss);
    std::vector<Tensor*> params;
    std::vector<Tensor> g, velocity;
    double norm2 = 0.0;
    net.visit([&](std::string_view, Tensor& t) { params.push_back(&t); });
    vars.visit([&](std::string_view, const ad::Var& v) {
      g.push_back(grads[v]);
      norm2 += g.back().array().square().sum();
      velocity.emplace_back(v.shape());
    });
    if (std::sqrt(norm2) <= 1e-3) continue;
    const double before = evaluate(net, one).loss;
    TrainConfig cfg;
    cfg.lr = 1e-6;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    sgd_step(params, g, velocity, cfg);
    CHECK(evaluate(net, one).loss <= before);
  }
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  cfg.momentum = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero steps reports an untrained model near chance") {
  ToyNet net = build_toy_net({}, 1);
  TrainConfig cfg;
  cfg.steps = 0;
  const auto r = train_toy(net, synth_quadrant(200, 1, 8, 8), synth_quadrant(500, 2, 8, 8), cfg);
  CHECK(r.losses.empty());
  CHECK(r.epochs.empty());
  CHECK(std::abs(r.initial_val_accuracy - 0.25) <= 0.1);
}

TEST_CASE("training is bit-reproducible and reports every step and epoch") {
  ToyNetSpec spec;
  spec.attention = AttentionKind::ema;
  spec.hyper = 8;
  const Dataset train = synth_quadrant(100, 1, 8, 8), val = synth_quadrant(40, 2, 8, 8);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.batch = 16;
  ToyNet a = build_toy_net(spec, 0), b = build_toy_net(spec, 0);
  const auto ra = train_toy(a, train, val, cfg);
  const auto rb = train_toy(b, train, val, cfg);
  CHECK(ra.losses == rb.losses);
  CHECK(ra.checksum == rb.checksum);
  CHECK(ra.losses.size() == 10);
  // 100 samples / 16 per batch = 7 steps per epoch, so 10 steps span two epochs.
  REQUIRE(ra.epochs.size() == 2);
  CHECK(ra.epochs[0].steps == 7);
  CHECK(ra.epochs[1].steps == 3);
}

TEST_CASE("class-count mismatch is a configuration error") {
  ToyNetSpec spec;
  spec.classes = 5;
  ToyNet net = build_toy_net(spec, 0);
  CHECK_THROWS_AS(train_toy(net, synth_quadrant(8, 1, 4, 4), synth_quadrant(8, 2, 4, 4), TrainConfig{}), ConfigError);
}
