#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ema/data.hpp"
#include "ema/toy_net.hpp"

namespace ema {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  Index batch = 32;
  Index steps = 500;
  std::uint64_t seed = 0;

  /// Throws ConfigError on lr <= 0, momentum outside [0,1), negative decay, batch < 1 or steps < 0.
  void validate() const;
};

struct EpochStats {
  Index epoch = 0;
  Index steps = 0;  // optimizer steps taken in this epoch
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // over the batches seen in this epoch
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<double> losses;  // one per step
  std::vector<EpochStats> epochs;
  double initial_loss = 0.0;  // mean over the training set before any update
  double initial_val_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  std::string checksum;  // FNV-1a over the final parameter bits
};

/// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
/// lr = 0 is accepted here so the update can be checked as an identity.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, std::span<Tensor> velocity,
              const TrainConfig& cfg);

/// Mean softmax cross-entropy and accuracy of the net over a dataset.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(const ToyNet& net, const Dataset& data, Index batch = 256);

std::string parameter_checksum(const ToyNet& net);

/// Trains in place. Epochs are full passes over a per-epoch shuffle of `train`;
/// a trailing partial epoch is reported like a full one.
TrainReport train_toy(ToyNet& net, const Dataset& train, const Dataset& val, const TrainConfig& cfg);

}  // namespace ema
