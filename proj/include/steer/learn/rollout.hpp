#pragma once

#include <functional>

#include "steer/teach/record.hpp"

namespace steer::learn {

/// A world plus its frame history, handing out observations.
class Rollout {
 public:
  explicit Rollout(const teach::SimSetup& setup);

  struct Step {
    sim::StepEvents events;
    /// Observation after the step. On a restart this shows the state the
    /// car reached before the reset.
    sim::Observation next;
    bool terminal = false;
  };

  const sim::Observation& observation() const noexcept { return current_; }
  const sim::World& world() const noexcept { return world_; }
  const teach::SimSetup& setup() const noexcept { return setup_; }

  Step step(sim::Action a);
  /// Forced restart (e.g. after a takeover timeout).
  void restart();

 private:
  void restart_history();

  teach::SimSetup setup_;
  sim::World world_;
  sim::FrameHistory history_;
  sim::Observation current_;
};

/// Maps an observation to an action index.
using ObservationPolicy = std::function<int(const sim::Observation&)>;
/// Maps an observation to a scalar reward.
using RewardFn = std::function<double(const sim::Observation&)>;

}  // namespace steer::learn
