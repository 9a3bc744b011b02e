#include "steer/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "steer/nn/losses.hpp"

namespace steer::nn {

namespace {

LossResult<double> compute(const Tensor64& out, const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::nll) return nll_loss(out, std::span<const int>(loss.classes));
  return mse_loss(out, std::span<const float>(loss.targets));
}

}  // namespace

double evaluate_loss(Network64& net, const Tensor64& input, const LossSpec& loss) {
  return compute(net.forward(input), loss).value;
}

double grad_check(Network64& net, const Tensor64& input, const LossSpec& loss, double h) {
  const std::mt19937_64 rng_state = net.rng();

  net.zero_grad();
  auto result = compute(net.forward(input), loss);
  net.backward(result.grad, true);
  std::vector<Tensor64> analytic;
  for (const auto* g : net.gradients()) analytic.push_back(*g);
  net.zero_grad();

  double worst = 0.0;
  auto params = net.parameters();
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor64& p = *params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      auto central = [&](double step) {
        p[i] = saved + step;
        net.rng() = rng_state;
        const double up = evaluate_loss(net, input, loss);
        p[i] = saved - step;
        net.rng() = rng_state;
        const double down = evaluate_loss(net, input, loss);
        p[i] = saved;
        return (up - down) / (2.0 * step);
      };
      // Richardson extrapolation of the step and step/2 central differences
      // cancels the O(h^2) term. When the two disagree by more than a smooth
      // function allows, the perturbation straddles a ReLU or max-pool kink and
      // the step is shrunk.
      double numeric = 0.0;
      for (double step = h; ; step *= 0.1) {
        const double coarse = central(step);
        const double fine = central(step / 2.0);
        numeric = (4.0 * fine - coarse) / 3.0;
        const double scale = std::max({std::abs(coarse), std::abs(fine), 1e-8});
        if (std::abs(coarse - fine) <= 1e-4 * scale || step < 1e-7) break;
      }
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  net.rng() = rng_state;
  return worst;
}

}  // namespace steer::nn
