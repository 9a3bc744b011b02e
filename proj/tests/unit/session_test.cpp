#include "doctest.h"
#include "steer/error.hpp"
#include "steer/service/session.hpp"

using namespace steer;
using namespace steer::service;

namespace {

teach::SimSetup setup() {
  return {sim::Track::load(std::string(STEER_DATA_DIR) + "/tracks/county.json"), {}, {}, 5};
}

SessionOptions small(Pace pace = Pace::realtime) {
  SessionOptions o;
  o.frame.height = 16;
  o.frame.width = 16;
  o.pace = pace;
  return o;
}

std::vector<int> exported_actions(Session& s) {
  s.close();
  return s.export_dataset().targets;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_argument;
}

}  // namespace

TEST_SUITE("session-service") {
  TEST_CASE("a key is held until the next key") {
    Session s("a", SessionMode::demo, setup(), small());
    s.ingest_action(0, sim::Action::left);
    for (int i = 0; i < 5; ++i) s.advance();
    s.ingest_action(5, sim::Action::none);
    s.advance();
    CHECK(exported_actions(s) == std::vector<int>{1, 1, 1, 1, 1, 0});
  }

  TEST_CASE("a future-stamped key waits for its tick") {
    Session s("a", SessionMode::demo, setup(), small());
    s.ingest_action(3, sim::Action::right);
    for (int i = 0; i < 5; ++i) s.advance();
    CHECK(exported_actions(s) == std::vector<int>{0, 0, 0, 2, 2});
  }

  TEST_CASE("of several keys pending for one tick the newest-stamped wins") {
    Session s("a", SessionMode::demo, setup(), small());
    s.advance();
    s.advance();
    s.ingest_action(0, sim::Action::left);
    s.ingest_action(2, sim::Action::right);
    s.ingest_action(1, sim::Action::left);
    s.advance();
    CHECK(exported_actions(s) == std::vector<int>{0, 0, 2});
  }

  TEST_CASE("inputs older than the stale window are dropped and counted") {
    Session s("a", SessionMode::demo, setup(), small());
    for (int i = 0; i < 20; ++i) s.advance();
    CHECK(s.ingest_action(9, sim::Action::left) == Ingest::stale);
    CHECK(s.stale_drops() == 1);
    CHECK(s.ingest_action(10, sim::Action::left) == Ingest::applied);
    CHECK(s.stale_drops() == 1);
    s.advance();
    CHECK(exported_actions(s).back() == 1);
  }

  TEST_CASE("labels persist until the next label; unlabeled lead-in is skipped") {
    Session s("a", SessionMode::label_reward, setup(), small());
    s.ingest_label(2, 1);
    s.ingest_label(5, -1);
    for (int i = 0; i < 8; ++i) s.advance();
    s.close();
    const teach::Dataset d = s.export_dataset();
    CHECK(d.kind == teach::DatasetKind::reward);
    CHECK(d.targets == std::vector<int>{1, 1, 1, -1, -1, -1});
    CHECK(d.meta["provenance"] == "human");
  }

  TEST_CASE("modes reject the other mode's inputs") {
    Session demo("a", SessionMode::demo, setup(), small());
    Session label("b", SessionMode::label_safety, setup(), small());
    Session spec("c", SessionMode::spectate, setup(), small());
    CHECK(code_of([&] { demo.ingest_label(0, 1); }) == Errc::bad_state);
    CHECK(code_of([&] { label.ingest_action(0, sim::Action::left); }) == Errc::bad_state);
    CHECK(code_of([&] { label.ingest_label(0, 0); }) == Errc::invalid_argument);
    CHECK(code_of([&] { spec.advance(); }) == Errc::bad_state);
    CHECK(code_of([&] { demo.export_dataset(); }) == Errc::bad_state);
    demo.close();
    CHECK(code_of([&] { demo.ingest_action(0, sim::Action::left); }) == Errc::bad_state);
    CHECK(code_of([&] { demo.export_dataset(); }) == Errc::invalid_argument);
  }

  TEST_CASE("lockstep sessions wait for input stamped at the current tick") {
    Session s("a", SessionMode::demo, setup(), small(Pace::lockstep));
    CHECK_FALSE(s.ready());
    s.ingest_action(0, sim::Action::none);
    CHECK(s.ready());
    s.advance();
    CHECK_FALSE(s.ready());
    s.ingest_action(3, sim::Action::left);
    int steps = 0;
    while (s.ready()) {
      s.advance();
      ++steps;
    }
    CHECK(steps == 3);
    CHECK(s.tick() == 4);
  }

  TEST_CASE("demo export matches a headless replay of the same keys") {
    const std::vector<sim::Action> tape = {sim::Action::left,  sim::Action::left, sim::Action::none,
                                           sim::Action::right, sim::Action::none, sim::Action::left};
    Session s("a", SessionMode::demo, setup(), small());
    for (std::size_t t = 0; t < tape.size(); ++t) {
      s.ingest_action(static_cast<long>(t), tape[t]);
      s.advance();
    }
    s.close();
    teach::SimSetup su = setup();
    su.frame.height = su.frame.width = 16;
    CHECK(teach::dataset_hash(s.export_dataset()) == teach::dataset_hash(teach::record_tape(su, tape)));
  }

  TEST_CASE("frame is row-major RGB") {
    Session s("a", SessionMode::demo, setup(), small());
    const auto rgb = s.frame_rgb();
    REQUIRE(rgb.size() == 3 * 16 * 16);
    teach::SimSetup su = setup();
    su.frame.height = su.frame.width = 16;
    const sim::Frame f = sim::render(s.world(), su.frame);
    for (std::size_t r : {0u, 7u, 15u}) {
      for (std::size_t c : {0u, 8u, 15u}) {
        for (std::size_t ch = 0; ch < 3; ++ch) {
          CHECK(rgb[(r * 16 + c) * 3 + ch] == f.pixels[(ch * 16 + r) * 16 + c]);
        }
      }
    }
  }

  TEST_CASE("options parse and validate") {
    const SessionOptions o = SessionOptions::from_json({{"height", 24}, {"width", 32}, {"pace", "lockstep"}});
    CHECK(o.frame.height == 24);
    CHECK(o.pace == Pace::lockstep);
    CHECK_THROWS_AS(SessionOptions::from_json({{"pace", "warp"}}), Error);
    CHECK_THROWS_AS(SessionOptions::from_json({{"tick_ms", 0}}), Error);
    CHECK(session_mode_from_string("label-safety") == SessionMode::label_safety);
    CHECK_THROWS_AS(session_mode_from_string("race"), Error);
  }
}
