#include "steer/service/session.hpp"

#include "steer/error.hpp"

namespace steer::service {

std::string_view to_string(SessionMode m) {
  switch (m) {
    case SessionMode::demo: return "demo";
    case SessionMode::label_reward: return "label-reward";
    case SessionMode::label_safety: return "label-safety";
    case SessionMode::spectate: return "spectate";
  }
  return "?";
}

SessionMode session_mode_from_string(std::string_view s) {
  if (s == "demo") return SessionMode::demo;
  if (s == "label-reward") return SessionMode::label_reward;
  if (s == "label-safety") return SessionMode::label_safety;
  if (s == "spectate") return SessionMode::spectate;
  throw Error(Errc::invalid_argument,
              "unknown session mode '" + std::string(s) + "' (demo | label-reward | label-safety | spectate)");
}

SessionOptions SessionOptions::from_json(const nlohmann::json& j) {
  SessionOptions o;
  if (j.is_null()) return o;
  if (!j.is_object()) throw Error(Errc::invalid_argument, "session config must be an object");
  try {
    o.frame.height = j.value("height", o.frame.height);
    o.frame.width = j.value("width", o.frame.width);
    o.gap = j.value("gap", o.gap);
    o.tick_ms = j.value("tick_ms", o.tick_ms);
    const std::string pace = j.value("pace", std::string("realtime"));
    if (pace == "realtime") {
      o.pace = Pace::realtime;
    } else if (pace == "lockstep") {
      o.pace = Pace::lockstep;
    } else {
      throw Error(Errc::invalid_argument, "pace must be realtime or lockstep");
    }
    o.stale_window = j.value("stale_window", o.stale_window);
    o.seed = j.value("seed", o.seed);
    o.edge_bias = j.value("edge_bias", o.edge_bias);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("session config: ") + e.what());
  }
  if (!(o.tick_ms > 0.0)) throw Error(Errc::invalid_argument, "tick_ms must be positive");
  if (o.frame.height == 0 || o.frame.width == 0 || o.gap == 0) {
    throw Error(Errc::invalid_argument, "frame extents and gap must be positive");
  }
  return o;
}

Session::Session(std::string id, SessionMode mode, const teach::SimSetup& setup, SessionOptions opts)
    : id_(std::move(id)), mode_(mode), setup_(setup), opts_(opts), rng_(opts.seed) {
  setup_.frame.height = opts_.frame.height;
  setup_.frame.width = opts_.frame.width;
  setup_.gap = opts_.gap;
  if (mode_ != SessionMode::spectate) roll_.emplace(setup_);
  sweep_ = teach::sweep_driver(opts_.seed ^ 0x5bd1e995ULL);
}

std::vector<std::uint8_t> Session::frame_rgb() const {
  if (!roll_) return {};
  const sim::Frame f = sim::render(roll_->world(), setup_.frame);
  const std::size_t plane = f.height * f.width;
  std::vector<std::uint8_t> rgb(3 * plane);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = f.pixels[c * plane + i];
  }
  return rgb;
}

Ingest Session::check_tick(long tick) {
  if (!active_) throw Error(Errc::bad_state, "session " + id_ + " is closed");
  if (tick < tick_ - static_cast<long>(opts_.stale_window)) {
    ++stale_drops_;
    return Ingest::stale;
  }
  return Ingest::applied;
}

Ingest Session::ingest_action(long tick, sim::Action key) {
  if (mode_ != SessionMode::demo) {
    throw Error(Errc::bad_state, "actions are only accepted in demo sessions (this one is " +
                                     std::string(to_string(mode_)) + ")");
  }
  if (check_tick(tick) == Ingest::stale) return Ingest::stale;
  if (pending_.size() >= opts_.max_pending && !pending_.count(tick)) {
    throw Error(Errc::bad_state, "too many queued actions");
  }
  pending_[tick] = key;
  latest_input_ = std::max(latest_input_, tick);
  return Ingest::applied;
}

Ingest Session::ingest_label(long tick, int value) {
  if (mode_ != SessionMode::label_reward && mode_ != SessionMode::label_safety) {
    throw Error(Errc::bad_state, "labels are only accepted in label sessions (this one is " +
                                     std::string(to_string(mode_)) + ")");
  }
  if (value != 1 && value != -1) throw Error(Errc::invalid_argument, "label value must be -1 or +1");
  if (check_tick(tick) == Ingest::stale) return Ingest::stale;
  labels_[tick] = value;
  latest_input_ = std::max(latest_input_, tick);
  return Ingest::applied;
}

bool Session::ready() const noexcept {
  if (!active_ || !roll_) return false;
  return opts_.pace == Pace::realtime || latest_input_ >= tick_;
}

sim::Action Session::scripted_action() {
  // Mirrors the oracle label recorder: sweep across lanes, with blocks of
  // excursions toward or past a road edge.
  if (tick_ % static_cast<long>(teach::kExcursionBlock) == 0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    excursion_ = opts_.edge_bias > 0.0 && coin(rng_) < opts_.edge_bias;
    if (excursion_) {
      const double hw = setup_.track.half_width();
      std::uniform_real_distribution<double> depth(hw - 3.0, hw + 5.0);
      excursion_target_ = (coin(rng_) < 0.5 ? -1.0 : 1.0) * depth(rng_);
    }
  }
  if (excursion_) return teach::oracle_drive(roll_->world().state(), excursion_target_);
  return sweep_(roll_->world(), roll_->observation());
}

sim::StepEvents Session::advance() {
  if (!active_) throw Error(Errc::bad_state, "session " + id_ + " is closed");
  if (!roll_) throw Error(Errc::bad_state, "spectate sessions have no world");
  sim::Action a = sim::Action::none;
  if (mode_ == SessionMode::demo) {
    while (!pending_.empty() && pending_.begin()->first <= tick_) {
      held_ = pending_.begin()->second;
      pending_.erase(pending_.begin());
    }
    a = held_;
  } else {
    a = scripted_action();
  }
  frames_.push_back(roll_->observation());
  actions_.push_back(static_cast<int>(a));
  const auto step = roll_->step(a);
  ++tick_;
  return step.events;
}

teach::Dataset Session::export_dataset() const {
  if (active_) throw Error(Errc::bad_state, "session " + id_ + " is still active; close it first");
  teach::Dataset d;
  d.meta = {{"provenance", "human"}, {"session", id_}, {"track", setup_.track.name()}, {"gap", setup_.gap}};
  if (mode_ == SessionMode::demo) {
    d.kind = teach::DatasetKind::demo;
    d.observations = frames_;
    d.targets = actions_;
  } else if (mode_ == SessionMode::spectate) {
    throw Error(Errc::invalid_argument, "spectate sessions record nothing");
  } else {
    d.kind = mode_ == SessionMode::label_reward ? teach::DatasetKind::reward : teach::DatasetKind::safety;
    for (std::size_t t = 0; t < frames_.size(); ++t) {
      auto it = labels_.upper_bound(static_cast<long>(t));
      if (it == labels_.begin()) continue;
      d.observations.push_back(frames_[t]);
      d.targets.push_back(std::prev(it)->second);
    }
  }
  if (d.size() == 0) throw Error(Errc::invalid_argument, "session " + id_ + " recorded nothing to export");
  return d;
}

}  // namespace steer::service
