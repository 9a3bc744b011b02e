#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace steer::sim {

struct Segment {
  enum class Kind { straight, arc };
  Kind kind = Kind::straight;
  double length = 0.0;  // straight length, m
  double radius = 0.0;  // arc radius, m
  double angle = 0.0;   // arc heading change, rad; positive turns left

  static Segment straight(double length) { return {Kind::straight, length, 0.0, 0.0}; }
  static Segment arc(double radius, double angle) { return {Kind::arc, 0.0, radius, angle}; }

  double arc_length() const;
  double curvature() const;
};

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

/// A point expressed in track coordinates.
struct FrenetPoint {
  double s = 0.0;
  double d = 0.0;
};

/// Centerline built from straights and arcs starting at the origin heading
/// along +x. Lateral offset d is positive to the left of the direction of
/// travel.
class Track {
 public:
  Track() = default;
  Track(std::string name, std::vector<Segment> segments, int lane_count = 4,
        double lane_width = 3.5, bool closed = true, bool lane_marks = true);

  static Track from_json(const std::string& text);
  static Track load(const std::filesystem::path& path);

  const std::string& name() const noexcept { return name_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  int lane_count() const noexcept { return lane_count_; }
  double lane_width() const noexcept { return lane_width_; }
  bool closed() const noexcept { return closed_; }
  bool lane_marks() const noexcept { return lane_marks_; }
  double length() const noexcept { return length_; }
  double half_width() const noexcept { return lane_count_ * lane_width_ / 2.0; }

  /// Center offset of lane k (1 = rightmost).
  double lane_center(int k) const;

  /// Wraps s into [0, length) on closed tracks, clamps on open ones.
  double wrap(double s) const;
  double curvature(double s) const;
  Pose pose(double s) const;
  Pose pose(double s, double d) const;

  /// Track coordinates of a world point, searching centerline positions
  /// within [s_from, s_to] (unwrapped). Empty when no segment covers the
  /// point from within that window.
  std::optional<FrenetPoint> project(double x, double y, double s_from, double s_to) const;

  /// Distance between the end pose and the start pose, and the total
  /// heading change.
  double closure_gap() const;
  double total_turn() const;

 private:
  std::size_t segment_at(double s) const;

  std::string name_;
  std::vector<Segment> segments_;
  std::vector<double> starts_;  // cumulative arclength at each segment start
  std::vector<Pose> origins_;   // pose at each segment start
  int lane_count_ = 4;
  double lane_width_ = 3.5;
  bool closed_ = true;
  bool lane_marks_ = true;
  double length_ = 0.0;
  Pose end_;
};

}  // namespace steer::sim
