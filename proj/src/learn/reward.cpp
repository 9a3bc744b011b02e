#include "steer/learn/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "steer/error.hpp"
#include "steer/learn/observation.hpp"

namespace steer::learn {

TrainedNet train_scalar(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from,
                        const ArchitectureOptions& arch) {
  if (train.kind == teach::DatasetKind::demo) {
    throw Error(Errc::invalid_argument, "scalar heads train on labeled (+-1) data");
  }
  if (train.size() == 0) throw Error(Errc::invalid_argument, "training split is empty");
  nn::Network net = make_scalar_net(observation_shape(train.observations[0]), cfg.seed, arch);
  if (trunk_from) copy_trunk(*trunk_from, net);
  TrainingCurve curve = train_supervised(net, train, validation, cfg);
  return {std::move(net), std::move(curve)};
}

TrainedNet train_reward(const teach::Dataset& train, const teach::Dataset& validation,
                        const TrainConfig& cfg, const nn::Network* trunk_from) {
  return train_scalar(train, validation, cfg, trunk_from);
}

double reward_of(nn::Network& net, const sim::Observation& obs) {
  net.set_mode(nn::Mode::eval);
  const nn::Tensor out = net.forward(make_batch(obs));
  if (out.size() != 1) throw Error(Errc::shape_mismatch, "reward network must have one output");
  return out[0];
}

RewardFn reward_function(nn::Network& net) {
  return [&net](const sim::Observation& o) { return reward_of(net, o); };
}

double sign_accuracy(nn::Network& net, const teach::Dataset& d) {
  if (d.size() == 0) return 0.0;
  return evaluate(net, d).accuracy;
}

teach::Dataset subsample(const teach::Dataset& d, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(Errc::invalid_argument, "subsample fraction must lie in (0, 1]");
  }
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (fraction < 1.0) {
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d.size())));
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
  }
  teach::Dataset out = d.subset(idx);
  if (out.kind != teach::DatasetKind::demo) {
    const auto pos = std::count(out.targets.begin(), out.targets.end(), 1);
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(out.size())) {
      throw Error(Errc::untrainable, "subsample kept a single label class");
    }
  }
  out.meta["subsample_fraction"] = fraction;
  out.meta["subsample_seed"] = seed;
  return out;
}

}  // namespace steer::learn
