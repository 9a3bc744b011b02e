#include "steer/teach/record.hpp"

#include <memory>
#include <random>

#include "steer/error.hpp"

namespace steer::teach {

Driver center_driver(const OracleConfig& cfg) {
  return [cfg](const sim::World& w, const sim::Observation&) {
    return oracle_drive(w.state(), 0.0, cfg);
  };
}

Driver lane_driver(int lane, const OracleConfig& cfg) {
  return [lane, cfg](const sim::World& w, const sim::Observation&) {
    return oracle_drive_lane(w, lane, cfg);
  };
}

Driver sweep_driver(std::uint64_t seed, std::size_t block, const OracleConfig& cfg) {
  struct State {
    std::mt19937_64 rng;
    std::size_t count = 0;
    int lane = 1;
  };
  auto st = std::make_shared<State>();
  st->rng.seed(seed);
  return [st, block, cfg](const sim::World& w, const sim::Observation&) {
    if (st->count++ % block == 0) {
      st->lane = std::uniform_int_distribution<int>(1, w.track().lane_count())(st->rng);
    }
    return oracle_drive_lane(w, st->lane, cfg);
  };
}

Dataset record_demonstrations(const SimSetup& setup, std::size_t ticks, double noise_rate,
                              std::uint64_t seed, const OracleConfig& cfg) {
  if (ticks < 1) throw Error(Errc::invalid_argument, "record_demonstrations: ticks must be >= 1");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
    throw Error(Errc::invalid_argument, "noise_rate must lie in [0, 1]");
  }
  sim::World world(setup.track, setup.world);
  auto history = setup.make_history();
  history.push(sim::render(world, setup.frame));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, sim::kActionCount - 1);

  Dataset d;
  d.kind = DatasetKind::demo;
  d.observations.reserve(ticks);
  d.targets.reserve(ticks);
  std::size_t replaced = 0;
  for (std::size_t t = 0; t < ticks; ++t) {
    sim::Action a = oracle_drive(world.state(), 0.0, cfg);
    if (noise_rate > 0.0 && coin(rng) < noise_rate) {
      a = sim::action_from_index(any_action(rng));
      ++replaced;
    }
    d.observations.push_back(history.observation());
    d.targets.push_back(static_cast<int>(a));
    if (world.step(a).events.restarted()) history.clear();
    history.push(sim::render(world, setup.frame));
  }
  d.meta = {{"provenance", "oracle"}, {"track", setup.track.name()}, {"seed", seed},
            {"noise_rate", noise_rate}, {"replaced_actions", replaced}, {"gap", setup.gap}};
  return d;
}

Dataset record_tape(const SimSetup& setup, const std::vector<sim::Action>& tape) {
  if (tape.empty()) throw Error(Errc::invalid_argument, "record_tape: empty action tape");
  sim::World world(setup.track, setup.world);
  auto history = setup.make_history();
  history.push(sim::render(world, setup.frame));
  Dataset d;
  d.kind = DatasetKind::demo;
  for (const sim::Action a : tape) {
    d.observations.push_back(history.observation());
    d.targets.push_back(static_cast<int>(a));
    if (world.step(a).events.restarted()) history.clear();
    history.push(sim::render(world, setup.frame));
  }
  d.meta = {{"provenance", "tape"}, {"track", setup.track.name()}, {"gap", setup.gap}};
  return d;
}

Dataset record_labels(const SimSetup& setup, const Driver& driver, std::size_t ticks,
                      DatasetKind channel, double edge_bias, std::uint64_t seed,
                      const OracleConfig& cfg) {
  if (channel == DatasetKind::demo) {
    throw Error(Errc::invalid_argument, "record_labels needs the reward or safety channel");
  }
  if (ticks < 1) throw Error(Errc::invalid_argument, "record_labels: ticks must be >= 1");
  if (!(edge_bias >= 0.0 && edge_bias <= 1.0)) {
    throw Error(Errc::invalid_argument, "edge_bias must lie in [0, 1]");
  }
  sim::World world(setup.track, setup.world);
  auto history = setup.make_history();
  history.push(sim::render(world, setup.frame));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const double hw = setup.track.half_width();
  std::uniform_real_distribution<double> depth(hw - 3.0, hw + 5.0);

  Dataset d;
  d.kind = channel;
  d.observations.reserve(ticks);
  d.targets.reserve(ticks);
  bool excursion = false;
  double excursion_target = 0.0;
  std::size_t excursion_blocks = 0;
  int positives = 0;
  for (std::size_t t = 0; t < ticks; ++t) {
    if (t % kExcursionBlock == 0) {
      excursion = edge_bias > 0.0 && coin(rng) < edge_bias;
      if (excursion) {
        excursion_target = (coin(rng) < 0.5 ? -1.0 : 1.0) * depth(rng);
        ++excursion_blocks;
      }
    }
    const sim::CarState& s = world.state();
    const int label = channel == DatasetKind::reward ? oracle_reward_label(setup.track, s)
                                                     : oracle_safety_label(setup.track, s);
    positives += label > 0;
    d.observations.push_back(history.observation());
    d.targets.push_back(label);
    const sim::Action a = excursion ? oracle_drive(s, excursion_target, cfg)
                                    : driver(world, d.observations.back());
    if (world.step(a).events.restarted()) history.clear();
    history.push(sim::render(world, setup.frame));
  }
  if (positives == 0 || positives == static_cast<int>(ticks)) {
    throw Error(Errc::untrainable, std::string(to_string(channel)) + " recording produced only " +
                                       (positives ? "+1" : "-1") + " labels over " +
                                       std::to_string(ticks) + " ticks; raise edge_bias");
  }
  d.meta = {{"provenance", "oracle"}, {"track", setup.track.name()}, {"seed", seed},
            {"edge_bias", edge_bias}, {"excursion_blocks", excursion_blocks}, {"gap", setup.gap}};
  return d;
}

}  // namespace steer::teach
