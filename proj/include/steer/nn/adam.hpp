#pragma once

#include <cstdint>
#include <vector>

#include "steer/nn/network.hpp"

namespace steer::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected ADAM bound to one network's parameter layout. Frozen
/// layers are skipped (their moments stay untouched) but still have their
/// gradients cleared.
template <typename T>
class BasicAdam {
 public:
  BasicAdam(const BasicNetwork<T>& net, AdamConfig config);

  void step(BasicNetwork<T>& net);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_count_; }
  const std::vector<BasicTensor<T>>& first_moment() const noexcept { return m_; }
  const std::vector<BasicTensor<T>>& second_moment() const noexcept { return v_; }

 private:
  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::vector<BasicTensor<T>> m_;
  std::vector<BasicTensor<T>> v_;
};

using Adam = BasicAdam<float>;

extern template class BasicAdam<float>;
extern template class BasicAdam<double>;

}  // namespace steer::nn
