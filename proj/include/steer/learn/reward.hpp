#pragma once

#include "steer/learn/architecture.hpp"
#include "steer/learn/rollout.hpp"
#include "steer/learn/supervised.hpp"

namespace steer::learn {

/// Trains a tanh-headed scalar network on +-1 labels by MSE with early
/// stopping on validation sign accuracy. With `trunk_from` the
/// convolutional trunk starts from that network's parameters.
TrainedNet train_scalar(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from = nullptr,
                        const ArchitectureOptions& arch = {});

TrainedNet train_reward(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from = nullptr);

/// Scalar output of the network in evaluation mode.
double reward_of(nn::Network& net, const sim::Observation& obs);
RewardFn reward_function(nn::Network& net);

/// Fraction of records whose output sign matches the label (0 counts as -1).
double sign_accuracy(nn::Network& net, const teach::Dataset& d);

/// Uniform subsample without replacement of round(fraction * n) records,
/// kept in their original order. Both label classes must survive.
teach::Dataset subsample(const teach::Dataset& d, double fraction, std::uint64_t seed);

}  // namespace steer::learn
