#include "steer/nn/adam.hpp"

#include <cmath>

namespace steer::nn {

template <typename T>
BasicAdam<T>::BasicAdam(const BasicNetwork<T>& net, AdamConfig config) : config_(config) {
  if (!(config.lr > 0 && config.beta1 > 0 && config.beta1 < 1 && config.beta2 > 0 &&
        config.beta2 < 1 && config.epsilon > 0)) {
    throw Error(Errc::invalid_argument, "ADAM hyperparameters out of range");
  }
  for (const auto* p : net.parameters()) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

template <typename T>
void BasicAdam<T>::step(BasicNetwork<T>& net) {
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const double b1 = config_.beta1, b2 = config_.beta2;

  std::size_t slot = 0;
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    auto& layer = net.layer(li);
    auto params = layer.params();
    auto grads = layer.grads();
    for (std::size_t k = 0; k < params.size(); ++k, ++slot) {
      BasicTensor<T>& p = *params[k];
      BasicTensor<T>& g = *grads[k];
      if (p.shape() != m_[slot].shape()) {
        throw Error(Errc::shape_mismatch, "ADAM state does not match network parameters");
      }
      if (layer.trainable()) {
        BasicTensor<T>& m = m_[slot];
        BasicTensor<T>& v = v_[slot];
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double gi = static_cast<double>(g[i]);
          const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
          const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
          m[i] = static_cast<T>(mi);
          v[i] = static_cast<T>(vi);
          const double update = config_.lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
          p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
        }
      }
      g.fill(T{0});
    }
  }
}

template class BasicAdam<float>;
template class BasicAdam<double>;

}  // namespace steer::nn
