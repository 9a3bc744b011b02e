#include "steer/learn/safety.hpp"

#include "steer/error.hpp"
#include "steer/learn/imitation.hpp"

namespace steer::learn {

TrainedNet train_safety(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from) {
  return train_scalar(train, validation, cfg, trunk_from);
}

Control gate(double score, double threshold) {
  return score > threshold ? Control::agent : Control::safe;
}

Control gate(SafetyModule& m, const sim::Observation& obs) {
  return gate(reward_of(m.net, obs), m.params.threshold);
}

Takeover::Decision Takeover::update(Control reading) {
  if (active_) {
    streak_ = reading == Control::agent ? streak_ + 1 : 0;
    if (streak_ > p_.hysteresis) {
      active_ = false;
    } else if (ticks_ >= p_.max_ticks) {
      active_ = false;
      return Decision::timeout;
    }
  }
  if (!active_ && reading == Control::safe) {
    active_ = true;
    ticks_ = 0;
    streak_ = 0;
  }
  if (!active_) return Decision::agent;
  ++ticks_;
  return Decision::safe;
}

TakeoverResult safe_takeover(SafetyModule& m, Rollout& roll, std::size_t max_ticks) {
  SafetyParams p = m.params;
  p.max_ticks = max_ticks;
  Takeover t(p);
  t.update(Control::safe);
  TakeoverResult r;
  for (;;) {
    roll.step(sim::action_from_index(act(m.safe_policy, roll.observation())));
    ++r.ticks;
    const auto d = t.update(gate(m, roll.observation()));
    if (d == Takeover::Decision::agent) return r;
    if (d == Takeover::Decision::timeout) {
      roll.restart();
      r.timeout = true;
      return r;
    }
  }
}

}  // namespace steer::learn
