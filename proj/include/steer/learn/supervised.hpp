#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "json.hpp"
#include "steer/nn/adam.hpp"
#include "steer/nn/network.hpp"
#include "steer/teach/dataset.hpp"

namespace steer::learn {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_iterations = 20000;
  std::size_t eval_every = 200;
  std::size_t patience = 10;  // evaluations without improvement
  nn::AdamConfig adam;
  std::uint64_t seed = 1;
};

struct EvalPoint {
  std::size_t iteration = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainingCurve {
  std::vector<double> train_loss;  // one entry per iteration
  std::vector<EvalPoint> evals;    // evals[0] is the initialization
  std::size_t best_iteration = 0;
  double best_accuracy = 0.0;

  nlohmann::json to_json() const;
};

struct TrainedNet {
  nn::Network net;
  TrainingCurve curve;
};

struct Split {
  teach::Dataset train;
  teach::Dataset validation;
};

/// Shuffled 80/20 partition; validation gets round(0.2 * n) records.
Split split_dataset(const teach::Dataset& d, std::uint64_t seed);

/// Trains `net` in place with minibatch ADAM and returns the parameters
/// with the best validation accuracy (the initialization included).
/// Demo data is fit with NLL and scored by argmax accuracy; labeled data
/// with MSE and sign accuracy.
TrainingCurve train_supervised(nn::Network& net, const teach::Dataset& train,
                               const teach::Dataset& validation, const TrainConfig& cfg);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};
Evaluation evaluate(nn::Network& net, const teach::Dataset& d, std::size_t chunk = 128);

}  // namespace steer::learn
