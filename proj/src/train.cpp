#include "ema/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "ema/error.hpp"

namespace ema {

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, std::span<Tensor> velocity,
              const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                     " grads, " + std::to_string(velocity.size()) + " velocities");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i];
    if (grads[i].shape() != theta.shape() || velocity[i].shape() != theta.shape()) {
      throw ShapeError("sgd_step: shape mismatch at parameter " + std::to_string(i) + " " + theta.shape().str());
    }
    velocity[i].array() = cfg.momentum * velocity[i].array() + grads[i].array() + cfg.weight_decay * theta.array();
    theta.array() -= cfg.lr * velocity[i].array();
  }
}

namespace {

/// Gathers rows of a dataset into one image batch.
Tensor gather(const Dataset& d, std::span<const Index> rows) {
  const Shape& s = d.images.shape();
  const Index per = s[1] * s[2] * s[3];
  Tensor out(Shape{static_cast<Index>(rows.size()), s[1], s[2], s[3]});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.array().segment(static_cast<Index>(i) * per, per) = d.images.array().segment(rows[i] * per, per);
  }
  return out;
}

Index argmax_row(const Tensor& logits, Index r) {
  const Index k = logits.shape()[1];
  Index best = 0;
  for (Index j = 1; j < k; ++j) {
    if (logits(r, j) > logits(r, best)) best = j;
  }
  return best;
}

std::vector<Tensor*> parameter_list(ToyNet& net) {
  std::vector<Tensor*> out;
  net.visit([&](std::string_view, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<ad::Var> var_list(const BasicToyNet<ad::Var>& net) {
  std::vector<ad::Var> out;
  net.visit([&](std::string_view, const ad::Var& v) { out.push_back(v); });
  return out;
}

}  // namespace

Evaluation evaluate(const ToyNet& net, const Dataset& data, Index batch) {
  Evaluation e;
  std::vector<Index> rows;
  for (Index start = 0; start < data.size(); start += batch) {
    const Index n = std::min(batch, data.size() - start);
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), start);
    const Tensor logits = toy_forward(net, gather(data, rows));
    const Tensor lse = logsumexp_rows(logits);
    for (Index r = 0; r < n; ++r) {
      const int label = data.labels[start + r];
      e.loss += lse[r] - logits(r, label);
      e.accuracy += argmax_row(logits, r) == label ? 1.0 : 0.0;
    }
  }
  e.loss /= static_cast<double>(data.size());
  e.accuracy /= static_cast<double>(data.size());
  return e;
}

std::string parameter_checksum(const ToyNet& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  net.visit([&](std::string_view, const Tensor& t) {
    for (double v : t.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  });
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

TrainReport train_toy(ToyNet& net, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.num_classes != net.spec.classes || val.num_classes != net.spec.classes) {
    throw ConfigError("dataset has " + std::to_string(train.num_classes) + " classes, net head has " +
                      std::to_string(net.spec.classes));
  }
  if (train.images.shape()[1] != net.spec.in_channels) {
    throw ConfigError("dataset has " + std::to_string(train.images.shape()[1]) + " channels, net expects " +
                      std::to_string(net.spec.in_channels));
  }

  TrainReport report;
  const Evaluation init_train = evaluate(net, train);
  report.initial_loss = init_train.loss;
  report.initial_val_accuracy = evaluate(net, val).accuracy;
  report.final_val_accuracy = report.initial_val_accuracy;
  report.losses.reserve(static_cast<std::size_t>(cfg.steps));

  std::vector<Tensor*> params = parameter_list(net);
  std::vector<Tensor> velocity;
  for (Tensor* p : params) velocity.emplace_back(p->shape());

  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  const Index steps_per_epoch = (train.size() + cfg.batch - 1) / cfg.batch;

  EpochStats epoch;
  double correct = 0.0;
  Index seen = 0;
  auto close_epoch = [&] {
    epoch.mean_loss /= static_cast<double>(epoch.steps);
    epoch.train_accuracy = correct / static_cast<double>(seen);
    epoch.val_accuracy = evaluate(net, val).accuracy;
    report.final_val_accuracy = epoch.val_accuracy;
    report.epochs.push_back(epoch);
    epoch = EpochStats{static_cast<Index>(report.epochs.size()), 0, 0.0, 0.0, 0.0};
    correct = 0.0;
    seen = 0;
  };

  for (Index step = 0; step < cfg.steps; ++step) {
    const Index within = step % steps_per_epoch;
    if (within == 0) std::shuffle(order.begin(), order.end(), rng);
    const Index start = within * cfg.batch;
    const Index n = std::min(cfg.batch, train.size() - start);
    const std::span<const Index> rows(order.data() + start, static_cast<std::size_t>(n));
    std::vector<int> labels(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = train.labels[rows[i]];

    ad::Tape tape;
    const auto vars = on_tape(tape, net);
    const ad::Var x = tape.leaf(gather(train, rows), "images");
    const ad::Var logits = toy_forward(vars, x);
    const ad::Var loss = ad::softmax_cross_entropy(logits, labels);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value)) throw NumericError("non-finite loss at step " + std::to_string(step));

    const ad::Gradients grads = tape.backward(loss);
    std::vector<Tensor> g;
    for (const ad::Var& v : var_list(vars)) g.push_back(grads[v]);
    sgd_step(params, g, velocity, cfg);

    report.losses.push_back(loss_value);
    epoch.mean_loss += loss_value;
    ++epoch.steps;
    for (Index r = 0; r < n; ++r) correct += argmax_row(logits.value(), r) == labels[r] ? 1.0 : 0.0;
    seen += n;
    if (within == steps_per_epoch - 1 || step == cfg.steps - 1) close_epoch();
  }
  report.checksum = parameter_checksum(net);
  return report;
}

}  // namespace ema
