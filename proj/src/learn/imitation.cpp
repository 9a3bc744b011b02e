#include "steer/learn/imitation.hpp"

#include "steer/error.hpp"
#include "steer/learn/observation.hpp"

namespace steer::learn {

TrainedNet train_policy(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const ArchitectureOptions& arch) {
  if (train.kind != teach::DatasetKind::demo) {
    throw Error(Errc::invalid_argument, "train_policy needs demonstration data");
  }
  if (train.size() == 0) throw Error(Errc::invalid_argument, "training split is empty");
  nn::Network net = make_policy_net(observation_shape(train.observations[0]), cfg.seed, arch);
  TrainingCurve curve = train_supervised(net, train, validation, cfg);
  return {std::move(net), std::move(curve)};
}

int argmax_action(std::span<const float> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int act(nn::Network& net, const sim::Observation& obs) {
  net.set_mode(nn::Mode::eval);
  const nn::Tensor out = net.forward(make_batch(obs));
  return argmax_action(out.values());
}

ObservationPolicy greedy_policy(nn::Network& net) {
  return [&net](const sim::Observation& o) { return act(net, o); };
}

DriveStats drive(const ObservationPolicy& policy, const teach::SimSetup& setup,
                 const RewardFn& reward, std::size_t ticks) {
  if (ticks == 0) throw Error(Errc::invalid_argument, "evaluation needs ticks > 0");
  Rollout roll(setup);
  DriveStats st;
  double total = 0.0;
  for (std::size_t t = 0; t < ticks; ++t) {
    const auto step = roll.step(sim::action_from_index(policy(roll.observation())));
    total += reward(step.next);
    st.restarts += step.events.restarted();
    st.off_road_entries += step.events.off_road_entry;
  }
  st.ticks = ticks;
  st.average_reward = total / static_cast<double>(ticks);
  return st;
}

double evaluate_policy(const ObservationPolicy& policy, const teach::SimSetup& setup,
                       const RewardFn& reward, std::size_t ticks) {
  return drive(policy, setup, reward, ticks).average_reward;
}

}  // namespace steer::learn
