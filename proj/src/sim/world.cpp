#include "steer/sim/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "steer/error.hpp"

namespace steer::sim {

std::string_view to_string(Action a) {
  switch (a) {
    case Action::none: return "none";
    case Action::left: return "left";
    case Action::right: return "right";
  }
  return "?";
}

Action action_from_index(int index) {
  if (index < 0 || index >= kActionCount) {
    throw Error(Errc::invalid_argument, "action index out of range: " + std::to_string(index));
  }
  return static_cast<Action>(index);
}

double normalize_angle(double a) {
  constexpr double pi = std::numbers::pi;
  a = std::remainder(a, 2.0 * pi);  // [-pi, pi]
  return a <= -pi ? a + 2.0 * pi : a;
}

std::optional<int> lane_of(const Track& track, double d) {
  const double hw = track.half_width();
  if (d < -hw || d >= hw) return std::nullopt;
  const int n = track.lane_count();
  const double w = track.lane_width();
  int k = std::clamp(static_cast<int>(std::floor(d / w + n / 2.0)) + 1, 1, n);
  // Settle rounding at the boundaries against the same expressions that
  // define the intervals.
  while (k > 1 && d < (k - 1 - n / 2.0) * w) --k;
  while (k < n && d >= (k - n / 2.0) * w) ++k;
  return k;
}

Probe probe(const Track& track, const CarState& s) {
  Probe p;
  p.on_road = std::abs(s.d) <= track.half_width();
  p.lane_index = p.on_road ? lane_of(track, s.d) : std::nullopt;
  p.aligned = std::abs(s.psi) <= std::numbers::pi / 2.0;
  return p;
}

World::World(Track track, WorldConfig config) : track_(std::move(track)), config_(config) {
  if (!(config_.speed > 0) || !(config_.dt > 0)) {
    throw Error(Errc::invalid_argument, "world needs positive speed and tick");
  }
  if (config_.spawn_lane < 1 || config_.spawn_lane > track_.lane_count()) {
    throw Error(Errc::invalid_argument, "spawn lane outside the track");
  }
  reset();
}

CarState World::spawn_state() const {
  return {track_.wrap(config_.spawn_s), track_.lane_center(config_.spawn_lane), 0.0, config_.speed};
}

void World::set_state(const CarState& s) {
  state_ = s;
  state_.psi = normalize_angle(s.psi);
  on_road_ = std::abs(state_.d) <= track_.half_width();
}

void World::reset() { set_state(spawn_state()); }

StepResult World::step(Action a) {
  const double u = a == Action::left ? 1.0 : a == Action::right ? -1.0 : 0.0;
  const double v = state_.speed;
  const double dt = config_.dt;
  CarState& s = state_;
  s.psi = normalize_angle(s.psi + u * config_.steer_step -
                          track_.curvature(s.s) * v * dt * std::cos(s.psi));
  s.d += v * dt * std::sin(s.psi);
  s.s = track_.wrap(s.s + v * dt * std::cos(s.psi));
  ++tick_;

  StepResult r;
  const bool now_on = std::abs(s.d) <= track_.half_width();
  r.events.off_road_entry = on_road_ && !now_on;
  r.events.on_road_entry = !on_road_ && now_on;
  on_road_ = now_on;
  r.terminal = s;
  const StepEvents rs = check_restart();
  r.events.restart_stuck = rs.restart_stuck;
  r.events.restart_wrong_direction = rs.restart_wrong_direction;
  r.events.on_road_entry = r.events.on_road_entry || rs.on_road_entry;
  return r;
}

StepEvents World::check_restart() {
  StepEvents e;
  e.restart_wrong_direction = std::abs(state_.psi) > std::numbers::pi / 2.0;
  e.restart_stuck = std::abs(state_.d) > track_.half_width() + 2.0 * track_.lane_width();
  if (e.restarted()) {
    const bool was_on = on_road_;
    reset();
    // The spawn point is on the road; keep entry/exit events paired.
    e.on_road_entry = !was_on;
  }
  return e;
}

}  // namespace steer::sim
