#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "steer/sim/world.hpp"

namespace steer::sim {

struct FrameConfig {
  std::size_t height = 48;
  std::size_t width = 64;
  double forward_m = 40.0;  // view depth ahead of the car
  double lateral_m = 10.0;  // half-width of the view
  bool hud = true;          // draw the speed box
};

/// Pixel rectangle [row0, row1) x [col0, col1).
struct Rect {
  std::size_t row0 = 0, row1 = 0, col0 = 0, col1 = 0;
  bool contains(std::size_t r, std::size_t c) const {
    return r >= row0 && r < row1 && c >= col0 && c < col1;
  }
};

/// 3 x H x W image, channel-major, quantized to u8 (value / 255 in [0,1]).
struct Frame {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  float value(std::size_t c, std::size_t r, std::size_t col) const {
    return pixels[(c * height + r) * width + col] / 255.0f;
  }
  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Two stacked frames (older first): 6 x H x W, u8-quantized.
struct Observation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  static constexpr std::size_t kChannels = 6;
  friend bool operator==(const Observation&, const Observation&) = default;
};

Rect hud_rect(const FrameConfig& cfg);

/// Ego coordinates of a pixel center: metres ahead and metres to the left.
struct EgoPoint {
  double forward = 0.0;
  double left = 0.0;
};
EgoPoint pixel_to_ego(const FrameConfig& cfg, double row, double col);

/// Top-down view aligned with the car's heading, car at the bottom centre.
/// Channel 0: road surface. Channel 1: road boundary lines plus lane marks
/// on marked tracks. Channel 2: car marker, heading ray, HUD speed box.
Frame render(const Track& track, const CarState& car, const FrameConfig& cfg);
inline Frame render(const World& w, const FrameConfig& cfg) {
  return render(w.track(), w.state(), cfg);
}

/// Ring of recent frames feeding the observation builder.
class FrameHistory {
 public:
  explicit FrameHistory(std::size_t gap = 5, Rect mask = {});

  void push(Frame f);
  void clear() { frames_.clear(); }
  std::size_t size() const noexcept { return frames_.size(); }
  std::size_t gap() const noexcept { return gap_; }

  /// Stacks frame(t - gap) and frame(t), duplicating the oldest retained
  /// frame while the history is shorter than the gap. The mask region is
  /// zeroed in all channels of both frames.
  Observation observation() const;

 private:
  std::size_t gap_;
  Rect mask_;
  std::deque<Frame> frames_;
};

Observation stack_frames(const Frame& older, const Frame& newer, const Rect& mask);

}  // namespace steer::sim
