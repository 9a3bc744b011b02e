#pragma once

#include <vector>

#include "steer/nn/network.hpp"

namespace steer::nn {

struct LossSpec {
  enum class Kind { nll, mse };
  Kind kind = Kind::mse;
  std::vector<int> classes;     // nll
  std::vector<float> targets;   // mse

  static LossSpec nll(std::vector<int> c) { return {Kind::nll, std::move(c), {}}; }
  static LossSpec mse(std::vector<float> t) { return {Kind::mse, {}, std::move(t)}; }
};

/// Loss of one forward pass. The network RNG is advanced as usual.
double evaluate_loss(Network64& net, const Tensor64& input, const LossSpec& loss);

/// Compares backprop gradients against central finite differences for every
/// parameter. Differences start at step h, are Richardson-extrapolated with
/// h/2, and the step shrinks when a kink lies inside the perturbation.
/// Dropout masks are held fixed by replaying the network RNG state. Returns
/// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(Network64& net, const Tensor64& input, const LossSpec& loss, double h = 1e-3);

}  // namespace steer::nn
