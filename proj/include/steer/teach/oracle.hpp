#pragma once

#include "steer/sim/world.hpp"

namespace steer::teach {

struct OracleConfig {
  double deadband = 0.2;   // m
  double lookahead = 5.0;  // m of travel used to extrapolate the heading error
};

/// Bang-bang steering toward lateral offset target_d using the predicted
/// offset d + lookahead * sin(psi).
sim::Action oracle_drive(const sim::CarState& s, double target_d, const OracleConfig& cfg = {});
sim::Action oracle_drive_lane(const sim::World& w, int target_lane, const OracleConfig& cfg = {});

/// +1 in lane 2, -1 otherwise.
int oracle_reward_label(const sim::Track& track, const sim::CarState& s);
/// +1 on the road and facing forward, -1 otherwise.
int oracle_safety_label(const sim::Track& track, const sim::CarState& s);

inline constexpr int kRewardLane = 2;

}  // namespace steer::teach
