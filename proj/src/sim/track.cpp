#include "steer/sim/track.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "steer/error.hpp"

namespace steer::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kEdgeSlack = 1e-6;

Pose advance(const Pose& o, const Segment& seg, double t) {
  if (seg.kind == Segment::Kind::straight) {
    return {o.x + t * std::cos(o.heading), o.y + t * std::sin(o.heading), o.heading};
  }
  const double k = seg.curvature();
  const double h = o.heading + k * t;
  // Position relative to the turn center, which sits 1/k to the left.
  return {o.x + (std::sin(h) - std::sin(o.heading)) / k,
          o.y - (std::cos(h) - std::cos(o.heading)) / k, h};
}

double positive_mod(double v, double m) {
  double r = std::fmod(v, m);
  return r < 0 ? r + m : r;
}

}  // namespace

double Segment::arc_length() const {
  return kind == Kind::straight ? length : radius * std::abs(angle);
}

double Segment::curvature() const {
  if (kind == Kind::straight) return 0.0;
  return angle >= 0 ? 1.0 / radius : -1.0 / radius;
}

Track::Track(std::string name, std::vector<Segment> segments, int lane_count, double lane_width,
             bool closed, bool lane_marks)
    : name_(std::move(name)),
      segments_(std::move(segments)),
      lane_count_(lane_count),
      lane_width_(lane_width),
      closed_(closed),
      lane_marks_(lane_marks) {
  if (segments_.empty()) throw Error(Errc::invalid_argument, "track has no segments");
  if (lane_count_ < 1 || !(lane_width_ > 0)) {
    throw Error(Errc::invalid_argument, "track needs lane_count >= 1 and lane_width > 0");
  }
  Pose p;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& seg = segments_[i];
    if (seg.kind == Segment::Kind::straight && !(seg.length > 0)) {
      throw Error(Errc::invalid_argument, "segment " + std::to_string(i) + ": length must be > 0");
    }
    if (seg.kind == Segment::Kind::arc &&
        (!(seg.radius > half_width()) || seg.angle == 0.0 || std::abs(seg.angle) > kTwoPi)) {
      throw Error(Errc::invalid_argument, "segment " + std::to_string(i) +
                                              ": arc needs radius > road half-width and 0 < |angle| <= 2pi");
    }
    starts_.push_back(length_);
    origins_.push_back(p);
    p = advance(p, seg, seg.arc_length());
    length_ += seg.arc_length();
  }
  end_ = p;
  if (closed_) {
    const double turn = total_turn();
    const double off = std::abs(turn - kTwoPi * std::round(turn / kTwoPi));
    if (closure_gap() > 1e-6 || off > 1e-9) {
      std::ostringstream msg;
      msg << "track '" << name_ << "' is marked closed but its end is " << closure_gap()
          << " m from the start (heading off by " << off << " rad)";
      throw Error(Errc::invalid_argument, msg.str());
    }
  }
}

Track Track::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<Segment> segs;
    for (const auto& s : j.at("segments")) {
      const std::string type = s.at("type");
      if (type == "straight") {
        segs.push_back(Segment::straight(s.at("length").get<double>()));
      } else if (type == "arc") {
        segs.push_back(Segment::arc(s.at("radius").get<double>(),
                                    s.at("degrees").get<double>() * std::numbers::pi / 180.0));
      } else {
        throw Error(Errc::invalid_argument, "unknown segment type '" + type + "'");
      }
    }
    return Track(j.value("name", std::string("unnamed")), std::move(segs), j.value("lane_count", 4),
                 j.value("lane_width", 3.5), j.value("closed", true), j.value("lane_marks", true));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("track definition: ") + e.what());
  }
}

Track Track::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::missing_input, "cannot open track file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

double Track::lane_center(int k) const {
  return (k - 1 - lane_count_ / 2.0 + 0.5) * lane_width_;
}

double Track::wrap(double s) const {
  if (closed_) return positive_mod(s, length_);
  return std::clamp(s, 0.0, length_);
}

std::size_t Track::segment_at(double s) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), s);
  return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, it - starts_.begin() - 1));
}

double Track::curvature(double s) const { return segments_[segment_at(wrap(s))].curvature(); }

Pose Track::pose(double s) const {
  s = wrap(s);
  const std::size_t i = segment_at(s);
  return advance(origins_[i], segments_[i], s - starts_[i]);
}

Pose Track::pose(double s, double d) const {
  Pose p = pose(s);
  p.x -= d * std::sin(p.heading);
  p.y += d * std::cos(p.heading);
  return p;
}

std::optional<FrenetPoint> Track::project(double x, double y, double s_from, double s_to) const {
  std::optional<FrenetPoint> best;
  auto consider = [&](double s, double d) {
    if (closed_) {
      // Shift s by whole laps into the search window when possible.
      s = s_from + positive_mod(s - s_from, length_);
    }
    if (s < s_from - kEdgeSlack || s > s_to + kEdgeSlack) return;
    if (!best || std::abs(d) < std::abs(best->d)) best = FrenetPoint{s, d};
  };
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& seg = segments_[i];
    const Pose& o = origins_[i];
    const double len = seg.arc_length();
    const double dx = x - o.x, dy = y - o.y;
    if (seg.kind == Segment::Kind::straight) {
      const double t = dx * std::cos(o.heading) + dy * std::sin(o.heading);
      if (t < -kEdgeSlack || t > len + kEdgeSlack) continue;
      consider(starts_[i] + t, -dx * std::sin(o.heading) + dy * std::cos(o.heading));
      continue;
    }
    const double k = seg.curvature();
    const double sign = k > 0 ? 1.0 : -1.0;
    const double cx = o.x - std::sin(o.heading) / k;
    const double cy = o.y + std::cos(o.heading) / k;
    const double vx = x - cx, vy = y - cy;
    const double r = std::hypot(vx, vy);
    if (r == 0.0) continue;
    const double h = std::atan2(sign * vx, -sign * vy);
    const double sweep = std::abs(seg.angle);
    // Swept angle from the segment start, centred on the arc's own span.
    const double lo = -(kTwoPi - sweep) / 2.0;
    const double phi = lo + positive_mod(sign * (h - o.heading) - lo, kTwoPi);
    const double t = phi * seg.radius;
    if (t < -kEdgeSlack || t > len + kEdgeSlack) continue;
    consider(starts_[i] + t, sign * (seg.radius - r));
  }
  return best;
}

double Track::closure_gap() const { return std::hypot(end_.x, end_.y); }

double Track::total_turn() const { return end_.heading; }

}  // namespace steer::sim
