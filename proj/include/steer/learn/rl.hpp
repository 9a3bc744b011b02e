#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "steer/learn/safety.hpp"
#include "steer/nn/adam.hpp"

namespace steer::learn {

struct Transition {
  sim::Observation s;
  int a = 0;
  float r = 0.0f;
  sim::Observation s_next;
  bool terminal = false;
};

/// Bounded FIFO of transitions with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(Transition t);
  std::size_t size() const noexcept { return ring_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::uint64_t pushes() const noexcept { return pushes_; }
  /// i-th stored transition, oldest first.
  const Transition& at(std::size_t i) const;
  /// n indices drawn uniformly with replacement.
  std::vector<const Transition*> sample(std::size_t n, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t head_ = 0;  // oldest element once full
  std::uint64_t pushes_ = 0;
};

/// Online Q-network and its frozen target copy.
struct QNet {
  nn::Network online;
  nn::Network target;

  void sync() { target.copy_parameters_from(online); }
};

enum class InitMode { random, il, il_policy_eval };
std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

inline constexpr double kFinalLayerInitRange = 1e-3;

QNet random_q(const nn::Shape& input, std::uint64_t seed);
/// Copies every parameter of the policy except the final Dense layer,
/// which is drawn from U(-1e-3, 1e-3). Target = online.
QNet il_initialize(const nn::Network& policy, std::uint64_t seed);

/// DDQN bootstrap targets: r for terminal transitions, otherwise
/// r + gamma * target(s')[argmax_a online(s')[a]].
std::vector<float> ddqn_targets(std::span<const Transition* const> batch, nn::Network& online,
                                nn::Network& target, double gamma);

/// One minibatch ADAM step on the squared TD error of the taken actions.
/// Returns the batch loss.
double ddqn_update(QNet& q, nn::Adam& adam, std::span<const Transition* const> batch, double gamma);

struct ActionChoice {
  int action = 0;
  double max_q = 0.0;
  bool explored = false;
};
/// Epsilon-greedy over the online network (lowest-index tie-break).
ActionChoice select_action(nn::Network& q, const sim::Observation& obs, double epsilon,
                           std::mt19937_64& rng);

struct RLConfig {
  double gamma = 0.9;
  double epsilon = 0.05;
  std::size_t batch_size = 32;
  std::size_t target_sync_period = 300;
  std::size_t epoch_frames = 2000;
  std::size_t total_frames = 120000;
  std::size_t latency_ticks = 0;
  std::size_t replay_capacity = 5000;
  std::size_t policy_eval_frames = 2000;
  bool safety_enabled = false;
  bool push_takeover_transitions = true;
  InitMode init_mode = InitMode::il_policy_eval;
  nn::AdamConfig adam;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static RLConfig from_json(const nlohmann::json& j);
};

struct TickEvents {
  sim::StepEvents step;
  bool takeover_timeout = false;
};

/// Off-road entries, restarts, and takeover timeouts, each counted once.
std::size_t count_accidents(std::span<const TickEvents> events);

struct EpochMetrics {
  std::size_t epoch = 0;
  double avg_reward = 0.0;
  double avg_action_value = 0.0;
  std::size_t accidents = 0;
  double takeover_fraction = 0.0;
  std::size_t restarts = 0;
  double wall_ms = 0.0;
  /// Mean of an independent scoring reward over the same transitions, when
  /// one is supplied.
  std::optional<double> avg_eval_reward;

  nlohmann::json to_json() const;
  static EpochMetrics from_json(const nlohmann::json& j);
};

/// Read-only hooks for progress reporting and live spectators.
struct RLObserver {
  virtual ~RLObserver() = default;
  virtual void on_epoch(const EpochMetrics&) {}
  virtual void on_tick(long /*tick*/, const sim::World&) {}
  virtual void on_takeover(long /*tick*/, bool /*on*/) {}
  virtual void on_event(long /*tick*/, const std::string& /*kind*/) {}
  /// Returning true stops training at the next tick.
  virtual bool stop_requested() { return false; }
  /// Called with the online network as of the last completed epoch when
  /// the TD loss turns non-finite, just before rl_train rethrows.
  virtual void on_divergence(const nn::Network& /*last_good*/) {}
};

/// Lets a policy drive while only the last two Dense layers of q learn.
/// Fills `replay` as a side effect.
void policy_evaluation_phase(QNet& q, nn::Adam& adam, const ObservationPolicy& actor, Rollout& roll,
                             const RewardFn& reward, std::size_t frames, ReplayBuffer& replay,
                             const RLConfig& cfg, std::mt19937_64& rng);

struct RLInputs {
  RewardFn reward;
  RewardFn eval_reward;                // optional
  const nn::Network* policy = nullptr;  // needed by the il init modes
  SafetyModule* safety = nullptr;       // needed when safety_enabled
};

struct RLResult {
  QNet q;
  std::vector<EpochMetrics> epochs;
};

RLResult rl_train(const RLConfig& cfg, const teach::SimSetup& setup, const RLInputs& in,
                  RLObserver* observer = nullptr);

}  // namespace steer::learn
