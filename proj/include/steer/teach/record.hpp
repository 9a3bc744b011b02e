#pragma once

#include <cstdint>
#include <functional>

#include "steer/sim/render.hpp"
#include "steer/teach/dataset.hpp"
#include "steer/teach/oracle.hpp"

namespace steer::teach {

/// Everything needed to turn a world into observations.
struct SimSetup {
  sim::Track track;
  sim::WorldConfig world;
  sim::FrameConfig frame;
  std::size_t gap = 5;

  sim::FrameHistory make_history() const { return sim::FrameHistory(gap, sim::hud_rect(frame)); }
};

/// Chooses the next action from the world (teachers) or the observation
/// (learned policies).
using Driver = std::function<sim::Action(const sim::World&, const sim::Observation&)>;

/// Road-centre oracle: the demonstrator ignores lane marks.
Driver center_driver(const OracleConfig& cfg = {});
Driver lane_driver(int lane, const OracleConfig& cfg = {});
/// Picks a fresh uniformly random target lane every `block` ticks.
Driver sweep_driver(std::uint64_t seed, std::size_t block = 50, const OracleConfig& cfg = {});

/// One record per tick with the actions taken from `tape`; the headless
/// counterpart of a live demo session.
Dataset record_tape(const SimSetup& setup, const std::vector<sim::Action>& tape);

/// One record per tick, oracle driving toward the road centre. With
/// probability noise_rate the executed (and recorded) action is replaced by
/// a uniformly random one.
Dataset record_demonstrations(const SimSetup& setup, std::size_t ticks, double noise_rate,
                              std::uint64_t seed, const OracleConfig& cfg = {});

/// Labels every visited state with the channel's oracle. Each 50-tick block
/// is, with probability edge_bias, replaced by an excursion toward a point
/// near or beyond a road edge. Throws Errc::untrainable if only one label
/// class was recorded.
Dataset record_labels(const SimSetup& setup, const Driver& driver, std::size_t ticks,
                      DatasetKind channel, double edge_bias, std::uint64_t seed,
                      const OracleConfig& cfg = {});

inline constexpr std::size_t kExcursionBlock = 50;

}  // namespace steer::teach
