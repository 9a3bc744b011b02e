#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "steer/error.hpp"
#include "steer/learn/imitation.hpp"
#include "steer/learn/observation.hpp"
#include "steer/learn/reward.hpp"
#include "steer/learn/rl.hpp"
#include "steer/learn/safety.hpp"

using namespace steer;
using namespace steer::learn;

namespace {

constexpr std::size_t kSide = 16;  // smallest frame the four pooling stages accept

teach::SimSetup small_setup() {
  teach::SimSetup s{sim::Track::load(std::string(STEER_DATA_DIR) + "/tracks/county.json"), {}, {}, 5};
  s.frame.height = kSide;
  s.frame.width = kSide;
  return s;
}

sim::Observation filled(std::uint8_t channel_mask_seed) {
  sim::Observation o{kSide, kSide, std::vector<std::uint8_t>(6 * kSide * kSide, 0)};
  for (std::size_t c = 0; c < 6; ++c) {
    if (!((channel_mask_seed >> c) & 1u)) continue;
    std::fill_n(o.pixels.begin() + static_cast<std::ptrdiff_t>(c * kSide * kSide), kSide * kSide, 255);
  }
  return o;
}

teach::Dataset labeled(std::size_t n, std::uint64_t seed) {
  teach::Dataset d;
  d.kind = teach::DatasetKind::reward;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = rng() & 1u;
    d.observations.push_back(filled(pos ? 0b000011 : 0b001100));
    d.targets.push_back(pos ? 1 : -1);
  }
  d.targets[0] = 1;
  d.observations[0] = filled(0b000011);
  d.targets[1] = -1;
  d.observations[1] = filled(0b001100);
  return d;
}

void fill_params(nn::Network& net, float v) {
  for (auto* p : net.parameters()) std::fill(p->values().begin(), p->values().end(), v);
}

// Scalar net whose output is tanh(bias) for every input.
nn::Network constant_scalar(float bias) {
  nn::Network net = make_scalar_net(observation_shape(kSide, kSide), 1);
  fill_params(net, 0.0f);
  auto& last = net.layer(last_dense_layer(net));
  last.params()[1]->values()[0] = bias;
  return net;
}

std::vector<float> q_values(nn::Network& q, const sim::Observation& o) {
  q.set_mode(nn::Mode::eval);
  const auto out = q.forward(make_batch(o));
  return {out.values().begin(), out.values().end()};
}

}  // namespace

TEST_SUITE("imitation") {
  TEST_CASE("split is a disjoint 80/20 partition") {
    teach::Dataset d = labeled(57, 3);
    for (std::size_t i = 0; i < d.size(); ++i) d.observations[i].pixels[0] = static_cast<std::uint8_t>(i);
    const Split s = split_dataset(d, 9);
    CHECK(s.validation.size() == 11);
    CHECK(s.train.size() == 46);
    std::set<int> seen;
    for (const auto* part : {&s.train, &s.validation}) {
      for (const auto& o : part->observations) CHECK(seen.insert(o.pixels[0]).second);
    }
    CHECK(seen.size() == 57);
    CHECK_THROWS_AS(split_dataset(labeled(9, 1), 1), Error);
  }

  TEST_CASE("a single demonstration is memorized") {
    teach::Dataset d;
    d.kind = teach::DatasetKind::demo;
    d.observations.push_back(filled(0b010101));
    d.targets.push_back(2);
    TrainConfig cfg;
    cfg.max_iterations = 300;
    cfg.eval_every = 50;
    cfg.adam.lr = 1e-3;
    TrainedNet t = train_policy(d, d, cfg);
    CHECK(act(t.net, d.observations[0]) == 2);
    CHECK(t.curve.train_loss.back() < t.curve.train_loss.front());
    CHECK(t.curve.best_accuracy == doctest::Approx(1.0));
  }

  TEST_CASE("argmax breaks ties toward the lowest index") {
    const std::vector<float> tie{0.2f, 0.4f, 0.4f};
    CHECK(argmax_action(tie) == 1);
    const std::vector<float> flat{1.0f, 1.0f, 1.0f};
    CHECK(argmax_action(flat) == 0);
    const std::vector<float> last{0.0f, -1.0f, 3.0f};
    CHECK(argmax_action(last) == 2);
  }

  TEST_CASE("constant reward evaluates to the constant") {
    const auto setup = small_setup();
    const ObservationPolicy straight = [](const sim::Observation&) { return 0; };
    const RewardFn c = [](const sim::Observation&) { return 0.37; };
    CHECK(evaluate_policy(straight, setup, c, 40) == doctest::Approx(0.37));
    CHECK_THROWS_AS(evaluate_policy(straight, setup, c, 0), Error);
  }

  TEST_CASE("drive counts restarts of a policy that always turns") {
    const ObservationPolicy left = [](const sim::Observation&) { return 1; };
    const RewardFn zero = [](const sim::Observation&) { return 0.0; };
    const DriveStats st = drive(left, small_setup(), zero, 400);
    CHECK(st.ticks == 400);
    CHECK(st.restarts > 0);
  }
}

TEST_SUITE("reward-induction") {
  TEST_CASE("subsample keeps order, size and both classes") {
    teach::Dataset d = labeled(200, 5);
    for (std::size_t i = 0; i < d.size(); ++i) d.observations[i].pixels[1] = static_cast<std::uint8_t>(i);
    const auto s = subsample(d, 0.2, 11);
    CHECK(s.size() == 40);
    for (std::size_t i = 1; i < s.size(); ++i) {
      CHECK(s.observations[i - 1].pixels[1] < s.observations[i].pixels[1]);
    }
    CHECK(s.meta["subsample_fraction"].get<double>() == doctest::Approx(0.2));
    CHECK(subsample(d, 1.0, 1).size() == 200);
    CHECK(subsample(d, 0.2, 11).observations == s.observations);
    CHECK_THROWS_AS(subsample(d, 0.0, 1), Error);
    CHECK_THROWS_AS(subsample(d, 1.5, 1), Error);
  }

  TEST_CASE("subsample refuses to collapse to one class") {
    teach::Dataset d = labeled(100, 2);
    std::fill(d.targets.begin(), d.targets.end(), -1);
    d.targets[0] = 1;
    bool threw = false;
    try {
      for (std::uint64_t seed = 0; seed < 20; ++seed) subsample(d, 0.05, seed);
    } catch (const Error& e) {
      threw = e.code() == Errc::untrainable;
    }
    CHECK(threw);
  }

  TEST_CASE("reward net separates two synthetic classes") {
    const teach::Dataset d = labeled(60, 8);
    const Split s = split_dataset(d, 1);
    TrainConfig cfg;
    cfg.max_iterations = 400;
    cfg.eval_every = 50;
    cfg.adam.lr = 1e-3;
    TrainedNet t = train_reward(s.train, s.validation, cfg);
    CHECK(sign_accuracy(t.net, d) == doctest::Approx(1.0));
    CHECK(reward_of(t.net, filled(0b000011)) > 0.0);
    CHECK(reward_of(t.net, filled(0b001100)) < 0.0);
  }

  TEST_CASE("reward outputs stay in [-1, 1]") {
    nn::Network net = make_scalar_net(observation_shape(kSide, kSide), 4);
    fill_params(net, 0.5f);
    const double r = reward_of(net, filled(0b111111));
    CHECK(r <= 1.0);
    CHECK(r >= -1.0);
  }
}

TEST_SUITE("safety-module") {
  TEST_CASE("gate hands over at or below the threshold") {
    CHECK(gate(0.0, 0.0) == Control::safe);
    CHECK(gate(1e-9, 0.0) == Control::agent);
    CHECK(gate(-0.3, -0.5) == Control::agent);
    CHECK(gate(-0.5, -0.5) == Control::safe);
  }

  TEST_CASE("raising the threshold never returns control to the agent") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> scores(500);
    for (auto& s : scores) s = u(rng);
    std::size_t prev = scores.size() + 1;
    for (double thr = -1.0; thr <= 1.0; thr += 0.1) {
      const auto n = static_cast<std::size_t>(
          std::count_if(scores.begin(), scores.end(), [&](double s) { return gate(s, thr) == Control::agent; }));
      CHECK(n <= prev);
      prev = n;
    }
  }

  TEST_CASE("takeover returns control after hysteresis + 1 agent readings") {
    Takeover t({0.0, 3, 300});
    CHECK(t.update(Control::agent) == Takeover::Decision::agent);
    CHECK(t.update(Control::safe) == Takeover::Decision::safe);
    CHECK(t.update(Control::agent) == Takeover::Decision::safe);
    CHECK(t.update(Control::agent) == Takeover::Decision::safe);
    CHECK(t.update(Control::safe) == Takeover::Decision::safe);  // streak resets
    for (int i = 0; i < 3; ++i) CHECK(t.update(Control::agent) == Takeover::Decision::safe);
    CHECK(t.update(Control::agent) == Takeover::Decision::agent);
    CHECK_FALSE(t.active());
  }

  TEST_CASE("takeover times out after max_ticks") {
    Takeover t({0.0, 3, 5});
    for (int i = 0; i < 5; ++i) CHECK(t.update(Control::safe) == Takeover::Decision::safe);
    CHECK(t.update(Control::safe) == Takeover::Decision::timeout);
    CHECK_FALSE(t.active());
    CHECK(t.update(Control::safe) == Takeover::Decision::safe);
  }

  TEST_CASE("safe takeover on a state judged safe at once lasts four ticks") {
    const auto setup = small_setup();
    SafetyModule m{constant_scalar(0.5f), make_policy_net(observation_shape(kSide, kSide), 2), {}};
    Rollout roll(setup);
    const auto r = safe_takeover(m, roll, 300);
    CHECK(r.ticks == 4);
    CHECK_FALSE(r.timeout);
  }

  TEST_CASE("safe takeover that never recovers restarts the world") {
    const auto setup = small_setup();
    SafetyModule m{constant_scalar(-0.5f), make_policy_net(observation_shape(kSide, kSide), 2), {}};
    Rollout roll(setup);
    const auto r = safe_takeover(m, roll, 7);
    CHECK(r.ticks == 7);
    CHECK(r.timeout);
    CHECK(roll.world().state().s == doctest::Approx(setup.world.spawn_s));
    CHECK(roll.world().state().d == doctest::Approx(setup.track.lane_center(2)));
  }
}

TEST_SUITE("rl-ddqn") {
  TEST_CASE("replay buffer drops the oldest transition first") {
    ReplayBuffer rb(3);
    for (int i = 0; i < 5; ++i) rb.push({filled(0), i, 0.0f, filled(0), false});
    CHECK(rb.size() == 3);
    CHECK(rb.pushes() == 5);
    for (std::size_t i = 0; i < 3; ++i) CHECK(rb.at(i).a == static_cast<int>(i) + 2);
    std::mt19937_64 rng(1);
    std::map<int, int> hist;
    for (const auto* t : rb.sample(3000, rng)) ++hist[t->a];
    for (int a = 2; a < 5; ++a) CHECK(std::abs(hist[a] - 1000) < 120);
    CHECK_THROWS_AS(ReplayBuffer(0), Error);
    CHECK_THROWS_AS(ReplayBuffer(2).sample(1, rng), Error);
  }

  TEST_CASE("il_initialize copies all but the final layer") {
    nn::Network policy = make_policy_net(observation_shape(kSide, kSide), 7);
    const QNet q = il_initialize(policy, 3);
    const std::size_t last = last_dense_layer(q.online);
    CHECK(q.online.layer_count() + 1 == policy.layer_count());
    for (std::size_t i = 0; i < q.online.layer_count(); ++i) {
      const auto a = q.online.layer(i).cparams();
      const auto b = policy.layer(i).cparams();
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (i == last) {
          for (float v : a[k]->values()) CHECK(std::abs(v) <= kFinalLayerInitRange);
        } else {
          CHECK(std::equal(a[k]->values().begin(), a[k]->values().end(), b[k]->values().begin()));
        }
      }
    }
    const auto po = q.online.parameters();
    const auto pt = q.target.parameters();
    for (std::size_t k = 0; k < po.size(); ++k) {
      CHECK(std::equal(po[k]->values().begin(), po[k]->values().end(), pt[k]->values().begin()));
    }
    nn::Network scalar = make_scalar_net(observation_shape(kSide, kSide), 1);
    CHECK_THROWS_AS(il_initialize(scalar, 1), Error);
  }

  TEST_CASE("ddqn targets") {
    QNet q = random_q(observation_shape(kSide, kSide), 5);
    QNet other = random_q(observation_shape(kSide, kSide), 6);
    q.target.copy_parameters_from(other.online);
    const Transition live{filled(1), 0, 0.25f, filled(6), false};
    const Transition end{filled(1), 1, -0.5f, filled(6), true};
    std::vector<const Transition*> batch{&live, &end};

    auto y0 = ddqn_targets(batch, q.online, q.target, 0.0);
    CHECK(y0[0] == doctest::Approx(0.25));
    CHECK(y0[1] == doctest::Approx(-0.5));

    const auto qo = q_values(q.online, live.s_next);
    const auto qt = q_values(q.target, live.s_next);
    const auto y = ddqn_targets(batch, q.online, q.target, 0.9);
    CHECK(y[0] == doctest::Approx(0.25 + 0.9 * qt[static_cast<std::size_t>(argmax_action(qo))]));
    CHECK(y[1] == doctest::Approx(-0.5));

    // With identical networks the target collapses to r + gamma * max Q.
    q.sync();
    const auto same = ddqn_targets(batch, q.online, q.target, 0.9);
    CHECK(same[0] == doctest::Approx(0.25 + 0.9 * *std::max_element(qo.begin(), qo.end())));
  }

  TEST_CASE("ddqn update moves Q(s, a) toward the target only through the taken action") {
    QNet q = random_q(observation_shape(kSide, kSide), 5);
    nn::Adam adam(q.online, {1e-3});
    const Transition t{filled(3), 2, 1.0f, filled(3), true};
    std::vector<const Transition*> batch(8, &t);
    const double first = ddqn_update(q, adam, batch, 0.9);
    double last = first;
    for (int i = 0; i < 200; ++i) last = ddqn_update(q, adam, batch, 0.9);
    CHECK(last < 0.1 * first);
    CHECK(q_values(q.online, t.s)[2] == doctest::Approx(1.0).epsilon(0.2));
  }

  TEST_CASE("epsilon-greedy frequencies") {
    QNet q = random_q(observation_shape(kSide, kSide), 8);
    const auto o = filled(5);
    const int greedy = argmax_action(q_values(q.online, o));
    std::mt19937_64 rng(2);
    for (int i = 0; i < 50; ++i) CHECK(select_action(q.online, o, 0.0, rng).action == greedy);

    std::array<int, 3> counts{};
    const int n = 3000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(q.online, o, 1.0, rng).action)];
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 3.0) * (c - n / 3.0) / (n / 3.0);
    CHECK(chi2 < 9.2103);

    int explored = 0;
    for (int i = 0; i < n; ++i) explored += select_action(q.online, o, 0.05, rng).explored;
    const double p = 0.05, sd = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(explored / static_cast<double>(n) - p) < 4 * sd);
  }

  TEST_CASE("ddqn recovers the value function of a three-state chain") {
    // Deterministic MDP: action a moves state s to (s + a) % 3, reward
    // depends on the state reached.
    const double gamma = 0.9;
    const std::array<double, 3> reward{0.0, 0.1, 0.3};
    std::array<std::array<double, 3>, 3> vi{};
    for (int it = 0; it < 500; ++it) {
      auto next = vi;
      for (int s = 0; s < 3; ++s) {
        for (int a = 0; a < 3; ++a) {
          const int s2 = (s + a) % 3;
          next[s][a] = reward[s2] + gamma * *std::max_element(vi[s2].begin(), vi[s2].end());
        }
      }
      vi = next;
    }
    const std::array<sim::Observation, 3> obs{filled(0b000001), filled(0b000110), filled(0b111000)};
    std::vector<Transition> all;
    for (int s = 0; s < 3; ++s) {
      for (int a = 0; a < 3; ++a) {
        const int s2 = (s + a) % 3;
        all.push_back({obs[s], a, static_cast<float>(reward[s2]), obs[s2], false});
      }
    }
    QNet q{make_q_net(observation_shape(kSide, kSide), 3, {0.0f}),
           make_q_net(observation_shape(kSide, kSide), 3, {0.0f})};
    q.sync();
    nn::Adam adam(q.online, {1e-3});
    std::vector<const Transition*> batch;
    for (const auto& t : all) batch.push_back(&t);
    for (int i = 1; i <= 3000; ++i) {
      ddqn_update(q, adam, batch, gamma);
      if (i % 50 == 0) q.sync();
    }
    for (int s = 0; s < 3; ++s) {
      const auto v = q_values(q.online, obs[s]);
      for (int a = 0; a < 3; ++a) CHECK(v[a] == doctest::Approx(vi[s][a]).epsilon(0.05));
    }
  }

  TEST_CASE("policy evaluation freezes the trunk") {
    const auto setup = small_setup();
    nn::Network policy = make_policy_net(observation_shape(kSide, kSide), 7);
    QNet q = il_initialize(policy, 1);
    const nn::Network before = q.online;
    nn::Adam adam(q.online, {1e-3});
    ReplayBuffer replay(500);
    RLConfig cfg;
    cfg.target_sync_period = 20;
    Rollout roll(setup);
    std::mt19937_64 rng(1);
    const RewardFn c = [](const sim::Observation&) { return 0.5; };

    policy_evaluation_phase(q, adam, greedy_policy(policy), roll, c, 0, replay, cfg, rng);
    CHECK(replay.size() == 0);

    policy_evaluation_phase(q, adam, greedy_policy(policy), roll, c, 120, replay, cfg, rng);
    CHECK(replay.size() == 120);
    const std::size_t last = last_dense_layer(q.online);
    for (std::size_t i = 0; i < q.online.layer_count(); ++i) {
      const auto a = q.online.layer(i).cparams();
      const auto b = before.layer(i).cparams();
      for (std::size_t k = 0; k < a.size(); ++k) {
        const bool same = std::equal(a[k]->values().begin(), a[k]->values().end(), b[k]->values().begin());
        if (i < kTrunkLayers) CHECK(same);
        if (i == kTrunkLayers || i == last) CHECK_FALSE(same);
      }
    }
  }

  TEST_CASE("policy evaluation under a constant reward approaches c / (1 - gamma)") {
    const auto setup = small_setup();
    nn::Network policy = make_policy_net(observation_shape(kSide, kSide), 7);
    QNet q = il_initialize(policy, 1);
    nn::Adam adam(q.online, {1e-3});
    ReplayBuffer replay(2000);
    RLConfig cfg;
    cfg.target_sync_period = 100;
    Rollout roll(setup);
    std::mt19937_64 rng(1);
    const double c = 0.5;
    const RewardFn reward = [c](const sim::Observation&) { return c; };
    // The lane oracle never leaves the road, so no transition is terminal.
    const ObservationPolicy oracle = [&roll](const sim::Observation&) {
      return static_cast<int>(teach::oracle_drive_lane(roll.world(), 2));
    };
    auto mean_q = [&] {
      double sum = 0.0;
      for (std::size_t i = 0; i < replay.size(); i += 10) {
        for (float v : q_values(q.online, replay.at(i).s)) sum += v;
      }
      return sum / (3.0 * static_cast<double>((replay.size() + 9) / 10));
    };
    std::vector<double> trend;
    for (int round = 0; round < 6; ++round) {
      policy_evaluation_phase(q, adam, oracle, roll, reward, 1000, replay, cfg, rng);
      trend.push_back(mean_q());
    }
    // Dropout in the update keeps some jitter; judge the tail average.
    const double tail = (trend[3] + trend[4] + trend[5]) / 3.0;
    CHECK(std::abs(tail - 10 * c) < std::abs(trend[0] - 10 * c));
    CHECK(tail == doctest::Approx(10 * c).epsilon(0.1));
  }

  TEST_CASE("accident count") {
    std::vector<TickEvents> ev(6);
    ev[0].step.off_road_entry = true;
    ev[1].step.on_road_entry = true;
    ev[2].step.restart_stuck = true;
    ev[3].step.restart_wrong_direction = true;
    ev[4].takeover_timeout = true;
    CHECK(count_accidents(ev) == 4);
  }

  TEST_CASE("config and metrics serialize") {
    RLConfig c;
    c.gamma = 0.8;
    c.latency_ticks = 2;
    c.init_mode = InitMode::il;
    c.safety_enabled = true;
    c.seed = 42;
    const RLConfig back = RLConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_THROWS_AS(init_mode_from_string("warm"), Error);
    RLConfig bad;
    bad.gamma = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);

    EpochMetrics m;
    m.epoch = 3;
    m.avg_reward = 0.25;
    m.accidents = 2;
    m.avg_eval_reward = 0.5;
    const auto j = m.to_json();
    CHECK(EpochMetrics::from_json(j).to_json() == j);
    m.avg_eval_reward.reset();
    CHECK_FALSE(m.to_json().contains("avg_eval_reward"));
  }

  TEST_CASE("rl_train runs with safety and latency and is reproducible") {
    const auto setup = small_setup();
    nn::Network policy = make_policy_net(observation_shape(kSide, kSide), 7);
    SafetyModule safety{constant_scalar(-0.5f), policy, {0.0, 3, 40}};
    RLConfig cfg;
    cfg.total_frames = 200;
    cfg.epoch_frames = 50;
    cfg.policy_eval_frames = 40;
    cfg.latency_ticks = 2;
    cfg.safety_enabled = true;
    cfg.target_sync_period = 30;
    RLInputs in;
    in.reward = [](const sim::Observation&) { return 0.1; };
    in.eval_reward = [](const sim::Observation&) { return -1.0; };
    in.policy = &policy;
    in.safety = &safety;
    struct Counter : RLObserver {
      int ticks = 0, timeouts = 0, epochs = 0;
      void on_tick(long, const sim::World&) override { ++ticks; }
      void on_event(long, const std::string& k) override { timeouts += k == "takeover_timeout"; }
      void on_epoch(const EpochMetrics&) override { ++epochs; }
    } obs;
    const RLResult r = rl_train(cfg, setup, in, &obs);
    REQUIRE(r.epochs.size() == 4);
    CHECK(obs.ticks == 200);
    CHECK(obs.epochs == 4);
    CHECK(obs.timeouts >= 4);
    for (const auto& e : r.epochs) {
      CHECK(e.avg_reward == doctest::Approx(0.1));
      CHECK(e.avg_eval_reward.value() == doctest::Approx(-1.0));
      CHECK(e.takeover_fraction == doctest::Approx(1.0));
    }
    const RLResult again = rl_train(cfg, setup, in);
    for (std::size_t i = 0; i < r.epochs.size(); ++i) {
      auto a = r.epochs[i].to_json(), b = again.epochs[i].to_json();
      a.erase("wall_ms");
      b.erase("wall_ms");
      CHECK(a == b);
    }

    RLConfig no_policy = cfg;
    no_policy.safety_enabled = false;
    RLInputs missing;
    missing.reward = in.reward;
    CHECK_THROWS_AS(rl_train(no_policy, setup, missing), Error);
  }
}
