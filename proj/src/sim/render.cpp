#include "steer/sim/render.hpp"

#include <algorithm>
#include <cmath>

#include "steer/error.hpp"

namespace steer::sim {

namespace {

constexpr double kLineHalfWidth = 0.15;  // m
constexpr double kCarLength = 3.0;
constexpr double kCarHalfWidth = 0.9;
constexpr double kRayLength = 12.0;
constexpr double kHudFullSpeed = 30.0;  // m/s at a full speed bar

// Fraction of a pixel of size `px` lying inside a region whose signed
// distance to the boundary at the pixel centre is `inside` (positive in).
double coverage(double inside, double px) { return std::clamp(inside / px + 0.5, 0.0, 1.0); }

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Rect hud_rect(const FrameConfig& cfg) {
  const std::size_t rows = std::max<std::size_t>(1, cfg.height / 8);
  const std::size_t cols = std::max<std::size_t>(1, cfg.width / 4);
  return {0, rows, cfg.width - cols, cfg.width};
}

EgoPoint pixel_to_ego(const FrameConfig& cfg, double row, double col) {
  const double h = static_cast<double>(cfg.height), w = static_cast<double>(cfg.width);
  return {(h - row - 0.5) * cfg.forward_m / h, (w / 2.0 - col - 0.5) * 2.0 * cfg.lateral_m / w};
}

Frame render(const Track& track, const CarState& car, const FrameConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0) throw Error(Errc::invalid_argument, "empty frame size");
  const std::size_t h = cfg.height, w = cfg.width, plane = h * w;
  Frame f{h, w, std::vector<std::uint8_t>(3 * plane, 0)};

  const Pose origin = track.pose(car.s, car.d);
  const double heading = origin.heading + car.psi;
  const double cx = std::cos(heading), cy = std::sin(heading);
  const double px_lat = 2.0 * cfg.lateral_m / static_cast<double>(w);
  const double hw = track.half_width();
  const double reach = std::hypot(cfg.forward_m, cfg.lateral_m) + 5.0;

  std::vector<double> lines{-hw, hw};
  if (track.lane_marks()) {
    for (int k = 1; k < track.lane_count(); ++k) lines.push_back(-hw + k * track.lane_width());
  }

  const Rect hud = hud_rect(cfg);
  const double speed_cols = std::clamp(car.speed / kHudFullSpeed, 0.0, 1.0) *
                            static_cast<double>(hud.col1 - hud.col0);

  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const EgoPoint e = pixel_to_ego(cfg, static_cast<double>(r), static_cast<double>(c));
      const double x = origin.x + e.forward * cx - e.left * cy;
      const double y = origin.y + e.forward * cy + e.left * cx;
      const auto fp = track.project(x, y, car.s - reach, car.s + reach);
      double road = 0.0, mark = 0.0;
      if (fp) {
        road = coverage(hw - std::abs(fp->d), px_lat);
        for (double ld : lines) {
          mark = std::max(mark, coverage(kLineHalfWidth - std::abs(fp->d - ld), px_lat));
        }
      }
      double ego = 0.0;
      if (e.forward <= kCarLength) {
        ego = coverage(kCarHalfWidth - std::abs(e.left), px_lat);
      } else if (e.forward <= kCarLength + kRayLength) {
        ego = 0.5 * coverage(kLineHalfWidth - std::abs(e.left), px_lat);
      }
      if (cfg.hud && hud.contains(r, c)) {
        ego = static_cast<double>(c - hud.col0) + 0.5 < speed_cols ? 1.0 : 0.25;
      }
      const std::size_t i = r * w + c;
      f.pixels[i] = quantize(road);
      f.pixels[plane + i] = quantize(mark);
      f.pixels[2 * plane + i] = quantize(ego);
    }
  }
  return f;
}

FrameHistory::FrameHistory(std::size_t gap, Rect mask) : gap_(gap), mask_(mask) {}

void FrameHistory::push(Frame f) {
  frames_.push_back(std::move(f));
  while (frames_.size() > gap_ + 1) frames_.pop_front();
}

Observation FrameHistory::observation() const {
  if (frames_.empty()) throw Error(Errc::bad_state, "observation requested from an empty history");
  return stack_frames(frames_.front(), frames_.back(), mask_);
}

Observation stack_frames(const Frame& older, const Frame& newer, const Rect& mask) {
  if (older.height != newer.height || older.width != newer.width) {
    throw Error(Errc::shape_mismatch, "stacked frames differ in size");
  }
  const std::size_t h = newer.height, w = newer.width, plane = h * w;
  Observation o{h, w, std::vector<std::uint8_t>(6 * plane)};
  std::copy(older.pixels.begin(), older.pixels.end(), o.pixels.begin());
  std::copy(newer.pixels.begin(), newer.pixels.end(), o.pixels.begin() + 3 * plane);
  for (std::size_t ch = 0; ch < 6; ++ch) {
    for (std::size_t r = mask.row0; r < std::min(mask.row1, h); ++r) {
      for (std::size_t c = mask.col0; c < std::min(mask.col1, w); ++c) {
        o.pixels[(ch * h + r) * w + c] = 0;
      }
    }
  }
  return o;
}

}  // namespace steer::sim
