#pragma once

#include <span>

#include "steer/learn/architecture.hpp"
#include "steer/learn/rollout.hpp"
#include "steer/learn/supervised.hpp"

namespace steer::learn {

/// Fits a fresh policy network to demonstrations by NLL with early stopping
/// on validation accuracy.
TrainedNet train_policy(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const ArchitectureOptions& arch = {});

/// Index of the largest value; ties go to the lowest index.
int argmax_action(std::span<const float> values);

/// Greedy action of a policy (or Q) network in evaluation mode.
int act(nn::Network& net, const sim::Observation& obs);

ObservationPolicy greedy_policy(nn::Network& net);

struct DriveStats {
  double average_reward = 0.0;
  std::size_t ticks = 0;
  std::size_t restarts = 0;
  std::size_t off_road_entries = 0;
};

/// Closed-loop drive from the spawn point; the reward of each tick is the
/// reward function applied to the observation after the step.
DriveStats drive(const ObservationPolicy& policy, const teach::SimSetup& setup,
                 const RewardFn& reward, std::size_t ticks);

double evaluate_policy(const ObservationPolicy& policy, const teach::SimSetup& setup,
                       const RewardFn& reward, std::size_t ticks);

}  // namespace steer::learn
