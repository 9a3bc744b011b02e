#pragma once

#include "steer/learn/reward.hpp"

namespace steer::learn {

enum class Control { agent, safe };

struct SafetyParams {
  double threshold = 0.0;
  std::size_t hysteresis = 3;    // extra safe ticks before returning control
  std::size_t max_ticks = 300;   // takeover length before a forced restart
};

/// Safety network, threshold, and fallback policy. Both networks are used
/// read-only (evaluation mode).
struct SafetyModule {
  nn::Network net;
  nn::Network safe_policy;
  SafetyParams params;
};

TrainedNet train_safety(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from = nullptr);

/// SafeControl when the score is at or below the threshold.
Control gate(double score, double threshold);
Control gate(SafetyModule& m, const sim::Observation& obs);

/// Per-tick takeover bookkeeping. A takeover starts on a SafeControl
/// reading and ends once the gate has read AgentControl on hysteresis + 1
/// consecutive ticks, or times out after max_ticks.
class Takeover {
 public:
  explicit Takeover(SafetyParams p) : p_(p) {}

  enum class Decision { agent, safe, timeout };

  /// Feed the gate reading for the current observation; returns who drives
  /// this tick. On timeout the caller restarts the world.
  Decision update(Control reading);

  bool active() const noexcept { return active_; }
  std::size_t ticks() const noexcept { return ticks_; }

 private:
  SafetyParams p_;
  bool active_ = false;
  std::size_t ticks_ = 0;
  std::size_t streak_ = 0;
};

struct TakeoverResult {
  std::size_t ticks = 0;
  bool timeout = false;
};

/// Drives with the safe policy until control returns or max_ticks pass.
/// A timeout forces a restart of the rollout.
TakeoverResult safe_takeover(SafetyModule& m, Rollout& roll, std::size_t max_ticks);

}  // namespace steer::learn
