#include "steer/learn/rl.hpp"

#include <chrono>
#include <cmath>
#include <deque>

#include "steer/error.hpp"
#include "steer/learn/imitation.hpp"
#include "steer/learn/observation.hpp"

namespace steer::learn {

// ---- replay -------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(Errc::invalid_argument, "replay capacity must be positive");
  ring_.reserve(capacity_);
}

void ReplayBuffer::push(Transition t) {
  ++pushes_;
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
    return;
  }
  ring_[head_] = std::move(t);
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= ring_.size()) throw Error(Errc::invalid_argument, "replay index out of range");
  return ring_[(head_ + i) % ring_.size()];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng) const {
  if (ring_.empty()) throw Error(Errc::bad_state, "sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, ring_.size() - 1);
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &ring_[pick(rng)];
  return out;
}

// ---- networks -----------------------------------------------------------

std::string to_string(InitMode m) {
  switch (m) {
    case InitMode::random: return "random";
    case InitMode::il: return "il";
    case InitMode::il_policy_eval: return "il+policy_eval";
  }
  return "?";
}

InitMode init_mode_from_string(const std::string& s) {
  if (s == "random") return InitMode::random;
  if (s == "il") return InitMode::il;
  if (s == "il+policy_eval" || s == "il_policy_eval") return InitMode::il_policy_eval;
  throw Error(Errc::invalid_argument, "unknown init mode '" + s + "' (random | il | il+policy_eval)");
}

QNet random_q(const nn::Shape& input, std::uint64_t seed) {
  nn::Network net = make_q_net(input, seed);
  return {net, net};
}

QNet il_initialize(const nn::Network& policy, std::uint64_t seed) {
  nn::Network q = make_q_net(policy.input_shape(), seed);
  const auto qs = q.specs();
  const auto ps = policy.specs();
  const std::size_t last = last_dense_layer(q);
  if (ps.size() != qs.size() + 1 || ps.back().kind != nn::LayerKind::softmax) {
    throw Error(Errc::shape_mismatch, "il_initialize: source is not a policy network");
  }
  for (std::size_t i = 0; i < qs.size(); ++i) {
    if (!(ps[i] == qs[i])) {
      throw Error(Errc::shape_mismatch, "il_initialize: layer " + std::to_string(i) + " differs");
    }
  }
  for (std::size_t i = 0; i < qs.size(); ++i) {
    auto to = q.layer(i).params();
    if (i == last) {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<float> u(-kFinalLayerInitRange, kFinalLayerInitRange);
      for (auto* t : to) {
        for (auto& v : t->values()) v = u(rng);
      }
      continue;
    }
    auto from = policy.layer(i).cparams();
    for (std::size_t k = 0; k < from.size(); ++k) *to[k] = *from[k];
  }
  return {q, q};
}

std::vector<float> ddqn_targets(std::span<const Transition* const> batch, nn::Network& online,
                                nn::Network& target, double gamma) {
  if (batch.empty()) throw Error(Errc::invalid_argument, "ddqn_targets: empty batch");
  std::vector<float> y(batch.size());
  bool any = false;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    y[b] = batch[b]->r;
    any |= !batch[b]->terminal;
  }
  if (!any || gamma == 0.0) return y;
  // Terminal rows ride along so every row sees the same batch shape.
  std::vector<const sim::Observation*> next;
  for (const auto* t : batch) next.push_back(&t->s_next);
  const nn::Tensor x = make_batch(next);
  online.set_mode(nn::Mode::eval);
  target.set_mode(nn::Mode::eval);
  const nn::Tensor qo = online.forward(x);
  const nn::Tensor qt = target.forward(x);
  const std::size_t k = qo.dim(1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i]->terminal) continue;
    const int a = argmax_action(std::span<const float>(qo.data() + i * k, k));
    y[i] = static_cast<float>(batch[i]->r + gamma * qt[i * k + static_cast<std::size_t>(a)]);
  }
  return y;
}

double ddqn_update(QNet& q, nn::Adam& adam, std::span<const Transition* const> batch, double gamma) {
  const std::vector<float> y = ddqn_targets(batch, q.online, q.target, gamma);
  std::vector<const sim::Observation*> states;
  for (const auto* t : batch) states.push_back(&t->s);
  q.online.set_mode(nn::Mode::train);
  const nn::Tensor out = q.online.forward(make_batch(states));
  const std::size_t n = batch.size(), k = out.dim(1);
  nn::Tensor grad(out.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t i = b * k + static_cast<std::size_t>(batch[b]->a);
    const double diff = static_cast<double>(out[i]) - y[b];
    loss += diff * diff;
    grad[i] = static_cast<float>(2.0 * diff / static_cast<double>(n));
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) throw Error(Errc::divergence, "TD loss became non-finite");
  q.online.backward(grad);
  adam.step(q.online);
  q.online.set_mode(nn::Mode::eval);
  return loss;
}

ActionChoice select_action(nn::Network& q, const sim::Observation& obs, double epsilon,
                           std::mt19937_64& rng) {
  q.set_mode(nn::Mode::eval);
  const nn::Tensor out = q.forward(make_batch(obs));
  ActionChoice c;
  c.action = argmax_action(out.values());
  c.max_q = out[static_cast<std::size_t>(c.action)];
  if (epsilon > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon) {
    c.action = std::uniform_int_distribution<int>(0, static_cast<int>(out.size()) - 1)(rng);
    c.explored = true;
  }
  return c;
}

// ---- config and metrics -------------------------------------------------

void RLConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(Errc::invalid_argument, "gamma must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(Errc::invalid_argument, "epsilon must lie in [0, 1]");
  if (batch_size == 0) throw Error(Errc::invalid_argument, "batch_size must be positive");
  if (epoch_frames < batch_size) throw Error(Errc::invalid_argument, "epoch_frames must be >= batch_size");
  if (target_sync_period == 0) throw Error(Errc::invalid_argument, "target_sync_period must be positive");
}

nlohmann::json RLConfig::to_json() const {
  return {{"gamma", gamma},
          {"epsilon", epsilon},
          {"batch_size", batch_size},
          {"target_sync_period", target_sync_period},
          {"epoch_frames", epoch_frames},
          {"total_frames", total_frames},
          {"latency_ticks", latency_ticks},
          {"replay_capacity", replay_capacity},
          {"policy_eval_frames", policy_eval_frames},
          {"safety_enabled", safety_enabled},
          {"push_takeover_transitions", push_takeover_transitions},
          {"init_mode", to_string(init_mode)},
          {"final_layer_init_range", kFinalLayerInitRange},
          {"lr", adam.lr},
          {"seed", seed}};
}

RLConfig RLConfig::from_json(const nlohmann::json& j) {
  RLConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.target_sync_period = j.value("target_sync_period", c.target_sync_period);
  c.epoch_frames = j.value("epoch_frames", c.epoch_frames);
  c.total_frames = j.value("total_frames", c.total_frames);
  c.latency_ticks = j.value("latency_ticks", c.latency_ticks);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.policy_eval_frames = j.value("policy_eval_frames", c.policy_eval_frames);
  c.safety_enabled = j.value("safety_enabled", c.safety_enabled);
  c.push_takeover_transitions = j.value("push_takeover_transitions", c.push_takeover_transitions);
  if (j.contains("init_mode")) c.init_mode = init_mode_from_string(j.at("init_mode").get<std::string>());
  c.adam.lr = j.value("lr", c.adam.lr);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::size_t count_accidents(std::span<const TickEvents> events) {
  std::size_t n = 0;
  for (const auto& e : events) {
    n += e.step.off_road_entry;
    n += e.step.restart_stuck;
    n += e.step.restart_wrong_direction;
    n += e.takeover_timeout;
  }
  return n;
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {{"epoch", epoch},
                      {"avg_reward", avg_reward},
                      {"avg_action_value", avg_action_value},
                      {"accidents", accidents},
                      {"takeover_fraction", takeover_fraction},
                      {"restarts", restarts},
                      {"wall_ms", wall_ms}};
  if (avg_eval_reward) j["avg_eval_reward"] = *avg_eval_reward;
  return j;
}

EpochMetrics EpochMetrics::from_json(const nlohmann::json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<std::size_t>();
  m.avg_reward = j.at("avg_reward").get<double>();
  m.avg_action_value = j.at("avg_action_value").get<double>();
  m.accidents = j.at("accidents").get<std::size_t>();
  m.takeover_fraction = j.at("takeover_fraction").get<double>();
  m.restarts = j.at("restarts").get<std::size_t>();
  m.wall_ms = j.value("wall_ms", 0.0);
  if (j.contains("avg_eval_reward")) m.avg_eval_reward = j.at("avg_eval_reward").get<double>();
  return m;
}

// ---- training loops -----------------------------------------------------

namespace {

class Learner {
 public:
  Learner(QNet& q, nn::Adam& adam, ReplayBuffer& replay, const RLConfig& cfg, std::mt19937_64& rng)
      : q_(q), adam_(adam), replay_(replay), cfg_(cfg), rng_(rng) {}

  void observe(Transition t) {
    replay_.push(std::move(t));
    if (replay_.size() < cfg_.batch_size) return;
    const auto batch = replay_.sample(cfg_.batch_size, rng_);
    ddqn_update(q_, adam_, batch, cfg_.gamma);
    if (++updates_ % cfg_.target_sync_period == 0) q_.sync();
  }

 private:
  QNet& q_;
  nn::Adam& adam_;
  ReplayBuffer& replay_;
  const RLConfig& cfg_;
  std::mt19937_64& rng_;
  std::uint64_t updates_ = 0;
};

}  // namespace

void policy_evaluation_phase(QNet& q, nn::Adam& adam, const ObservationPolicy& actor, Rollout& roll,
                             const RewardFn& reward, std::size_t frames, ReplayBuffer& replay,
                             const RLConfig& cfg, std::mt19937_64& rng) {
  if (frames == 0) return;
  q.online.set_trainable(0, kTrunkLayers, false);
  Learner learner(q, adam, replay, cfg, rng);
  for (std::size_t f = 0; f < frames; ++f) {
    sim::Observation s = roll.observation();
    const int a = actor(s);
    auto step = roll.step(sim::action_from_index(a));
    const auto r = static_cast<float>(reward(step.next));
    learner.observe({std::move(s), a, r, std::move(step.next), step.terminal});
  }
  q.online.set_trainable(0, kTrunkLayers, true);
  q.sync();
}

RLResult rl_train(const RLConfig& cfg, const teach::SimSetup& setup, const RLInputs& in,
                  RLObserver* observer) {
  cfg.validate();
  if (!in.reward) throw Error(Errc::missing_input, "rl_train needs a reward function");
  if (cfg.init_mode != InitMode::random && !in.policy) {
    throw Error(Errc::missing_input, "init mode " + to_string(cfg.init_mode) + " needs a policy network");
  }
  if (cfg.safety_enabled && !in.safety) {
    throw Error(Errc::missing_input, "safety_enabled needs a safety module");
  }
  const nn::Shape input = observation_shape(setup.frame.height, setup.frame.width);
  if (in.policy && in.policy->input_shape() != input) {
    throw Error(Errc::shape_mismatch, "policy expects " + nn::shape_string(in.policy->input_shape()) +
                                          " but frames are " + nn::shape_string(input));
  }

  std::mt19937_64 rng(cfg.seed);
  RLResult result{cfg.init_mode == InitMode::random ? random_q(input, cfg.seed)
                                                    : il_initialize(*in.policy, cfg.seed),
                  {}};
  QNet& q = result.q;
  nn::Adam adam(q.online, cfg.adam);
  ReplayBuffer replay(cfg.replay_capacity);
  Rollout roll(setup);

  if (cfg.init_mode == InitMode::il_policy_eval) {
    nn::Network actor = *in.policy;
    policy_evaluation_phase(q, adam, greedy_policy(actor), roll, in.reward, cfg.policy_eval_frames,
                            replay, cfg, rng);
  }

  Learner learner(q, adam, replay, cfg, rng);
  std::optional<Takeover> takeover;
  if (cfg.safety_enabled) takeover.emplace(in.safety->params);
  std::deque<int> pending(cfg.latency_ticks, static_cast<int>(sim::Action::none));

  struct Accum {
    double reward = 0, eval_reward = 0, max_q = 0;
    std::size_t ticks = 0, safe_ticks = 0, restarts = 0;
    std::vector<TickEvents> events;
  } acc;
  auto epoch_start = std::chrono::steady_clock::now();
  long tick = 0;
  bool was_active = false;
  nn::Network last_good = q.online;

  try {
    for (std::size_t frame = 0; frame < cfg.total_frames; ++frame, ++tick) {
      if (observer && observer->stop_requested()) break;
      TickEvents ev;
      ActionChoice choice = select_action(q.online, roll.observation(), cfg.epsilon, rng);
      bool safe_tick = false;
      int action = choice.action;
      if (takeover) {
        auto d = takeover->update(gate(*in.safety, roll.observation()));
        if (d == Takeover::Decision::timeout) {
          ev.takeover_timeout = true;
          ++acc.restarts;
          if (observer) observer->on_event(tick, "takeover_timeout");
          roll.restart();
          choice = select_action(q.online, roll.observation(), cfg.epsilon, rng);
          action = choice.action;
          d = takeover->update(gate(*in.safety, roll.observation()));
        }
        if (d == Takeover::Decision::safe) {
          safe_tick = true;
          action = act(in.safety->safe_policy, roll.observation());
        }
        if (observer && takeover->active() != was_active) observer->on_takeover(tick, takeover->active());
        was_active = takeover->active();
      }
      int executed = action;
      if (cfg.latency_ticks > 0) {
        pending.push_back(action);
        executed = pending.front();
        pending.pop_front();
      }

      sim::Observation s = roll.observation();
      auto step = roll.step(sim::action_from_index(executed));
      ev.step = step.events;
      const double r = in.reward(step.next);
      if (in.eval_reward) acc.eval_reward += in.eval_reward(step.next);
      acc.reward += r;
      acc.max_q += choice.max_q;
      acc.safe_ticks += safe_tick;
      acc.restarts += step.events.restarted();
      ++acc.ticks;
      if (observer) {
        if (step.events.off_road_entry) observer->on_event(tick, "off_road_entry");
        if (step.events.on_road_entry) observer->on_event(tick, "on_road_entry");
        if (step.events.restart_stuck) observer->on_event(tick, "restart_stuck");
        if (step.events.restart_wrong_direction) observer->on_event(tick, "restart_wrong_direction");
        observer->on_tick(tick, roll.world());
      }
      acc.events.push_back(ev);

      if (!safe_tick || cfg.push_takeover_transitions) {
        learner.observe({std::move(s), action, static_cast<float>(r), std::move(step.next), step.terminal});
      }

      if (acc.ticks == cfg.epoch_frames) {
        const auto now = std::chrono::steady_clock::now();
        EpochMetrics m;
        m.epoch = result.epochs.size();
        const double n = static_cast<double>(acc.ticks);
        m.avg_reward = acc.reward / n;
        m.avg_action_value = acc.max_q / n;
        m.accidents = count_accidents(acc.events);
        m.takeover_fraction = static_cast<double>(acc.safe_ticks) / n;
        m.restarts = acc.restarts;
        m.wall_ms = std::chrono::duration<double, std::milli>(now - epoch_start).count();
        if (in.eval_reward) m.avg_eval_reward = acc.eval_reward / n;
        result.epochs.push_back(m);
        last_good.copy_parameters_from(q.online);
        if (observer) observer->on_epoch(m);
        acc = Accum{};
        epoch_start = now;
      }
    }
  } catch (const Error& e) {
    if (e.code() == Errc::divergence && observer) observer->on_divergence(last_good);
    throw;
  }
  q.online.set_mode(nn::Mode::eval);
  return result;
}

}  // namespace steer::learn
