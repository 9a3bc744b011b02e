#pragma once

#include <optional>
#include <string_view>

#include "steer/sim/track.hpp"

namespace steer::sim {

enum class Action : int { none = 0, left = 1, right = 2 };

inline constexpr int kActionCount = 3;

std::string_view to_string(Action a);
Action action_from_index(int index);

struct CarState {
  double s = 0.0;
  double d = 0.0;
  double psi = 0.0;
  double speed = 0.0;
};

struct StepEvents {
  bool off_road_entry = false;
  bool on_road_entry = false;
  bool restart_stuck = false;
  bool restart_wrong_direction = false;

  bool restarted() const { return restart_stuck || restart_wrong_direction; }
};

struct Probe {
  std::optional<int> lane_index;  // 1 = rightmost
  bool on_road = false;
  bool aligned = false;
};

struct WorldConfig {
  double speed = 13.9;       // m/s
  double dt = 0.1;           // s per tick
  double steer_step = 0.035; // rad per steering tick
  double spawn_s = 0.0;
  int spawn_lane = 2;
};

/// Outcome of one tick. When a restart fired, `terminal` holds the state
/// the car reached before being reset.
struct StepResult {
  StepEvents events;
  CarState terminal;
};

/// Frenet-frame kinematic car on a fixed track at constant speed.
class World {
 public:
  explicit World(Track track, WorldConfig config = {});

  const Track& track() const noexcept { return track_; }
  const WorldConfig& config() const noexcept { return config_; }
  const CarState& state() const noexcept { return state_; }
  long tick() const noexcept { return tick_; }

  /// Places the car directly. Road-entry tracking follows the new state
  /// without emitting events.
  void set_state(const CarState& s);
  void reset();

  StepResult step(Action a);

  /// Applies the restart rules to the current state, resetting it when one
  /// fires.
  StepEvents check_restart();

  CarState spawn_state() const;

 private:
  Track track_;
  WorldConfig config_;
  CarState state_;
  bool on_road_ = true;
  long tick_ = 0;
};

Probe probe(const Track& track, const CarState& s);
inline Probe probe(const World& w) { return probe(w.track(), w.state()); }

/// Lane index for offset d under the half-open interval convention, or
/// empty outside [-half_width, half_width).
std::optional<int> lane_of(const Track& track, double d);

double normalize_angle(double a);

}  // namespace steer::sim
