#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/learn/rollout.hpp"

namespace steer::service {

enum class SessionMode { demo, label_reward, label_safety, spectate };
std::string_view to_string(SessionMode m);
/// "demo", "label-reward", "label-safety", "spectate".
SessionMode session_mode_from_string(std::string_view s);

enum class Pace { realtime, lockstep };

struct SessionOptions {
  sim::FrameConfig frame;
  std::size_t gap = 5;
  double tick_ms = 100.0;
  /// lockstep advances tick n only after an input stamped >= n arrived.
  Pace pace = Pace::realtime;
  std::size_t stale_window = 10;
  std::size_t max_pending = 1024;
  // Scripted car for the label modes.
  std::uint64_t seed = 1;
  double edge_bias = 0.5;

  static SessionOptions from_json(const nlohmann::json& j);
};

enum class Ingest { applied, stale };

/// Simulator state and recording of one teaching session. No I/O; the
/// server owns pacing and transport.
class Session {
 public:
  Session(std::string id, SessionMode mode, const teach::SimSetup& setup, SessionOptions opts);

  const std::string& id() const noexcept { return id_; }
  SessionMode mode() const noexcept { return mode_; }
  const SessionOptions& options() const noexcept { return opts_; }
  bool active() const noexcept { return active_; }
  /// Tick of the frame currently on screen.
  long tick() const noexcept { return tick_; }
  std::size_t stale_drops() const noexcept { return stale_drops_; }
  std::size_t recorded() const noexcept { return frames_.size(); }
  /// Highest tick stamped on any accepted input, or -1.
  long latest_input_tick() const noexcept { return latest_input_; }
  const sim::World& world() const { return roll_->world(); }

  /// Row-major interleaved RGB of the current frame.
  std::vector<std::uint8_t> frame_rgb() const;

  /// Demo mode only. The key applies from `tick` on and is held until the
  /// next key. Throws Errc::bad_state for other modes or a closed session.
  Ingest ingest_action(long tick, sim::Action key);
  /// Label modes only; value must be -1 or +1. The label holds for every
  /// frame from `tick` until the next label.
  Ingest ingest_label(long tick, int value);

  /// Whether a lockstep session may advance.
  bool ready() const noexcept;

  /// Records the current frame, steps the world, and moves to the next tick.
  sim::StepEvents advance();

  void close() noexcept { active_ = false; }

  /// Pre: closed. Demo sessions give one record per tick; label sessions
  /// one per labeled frame. Throws Errc::invalid_argument when empty.
  teach::Dataset export_dataset() const;

 private:
  Ingest check_tick(long tick);
  sim::Action scripted_action();

  std::string id_;
  SessionMode mode_;
  teach::SimSetup setup_;
  SessionOptions opts_;
  std::optional<learn::Rollout> roll_;
  bool active_ = true;
  long tick_ = 0;
  long latest_input_ = -1;
  std::size_t stale_drops_ = 0;

  std::map<long, sim::Action> pending_;
  sim::Action held_ = sim::Action::none;
  std::map<long, int> labels_;
  std::vector<sim::Observation> frames_;
  std::vector<int> actions_;

  std::mt19937_64 rng_;
  teach::Driver sweep_;
  bool excursion_ = false;
  double excursion_target_ = 0.0;
};

}  // namespace steer::service
