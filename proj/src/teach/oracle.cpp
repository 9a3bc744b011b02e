#include "steer/teach/oracle.hpp"

#include <cmath>

namespace steer::teach {

sim::Action oracle_drive(const sim::CarState& s, double target_d, const OracleConfig& cfg) {
  const double predicted = s.d + cfg.lookahead * std::sin(s.psi);
  if (predicted < target_d - cfg.deadband) return sim::Action::left;
  if (predicted > target_d + cfg.deadband) return sim::Action::right;
  return sim::Action::none;
}

sim::Action oracle_drive_lane(const sim::World& w, int target_lane, const OracleConfig& cfg) {
  return oracle_drive(w.state(), w.track().lane_center(target_lane), cfg);
}

int oracle_reward_label(const sim::Track& track, const sim::CarState& s) {
  return sim::probe(track, s).lane_index == kRewardLane ? 1 : -1;
}

int oracle_safety_label(const sim::Track& track, const sim::CarState& s) {
  const sim::Probe p = sim::probe(track, s);
  return p.on_road && p.aligned ? 1 : -1;
}

}  // namespace steer::teach
