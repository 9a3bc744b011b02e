#pragma once

#include <cstddef>
#include <span>

#include "steer/nn/tensor.hpp"

namespace steer::nn {

inline constexpr double kProbabilityFloor = 1e-12;

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;  // d loss / d prediction, same shape as the predictions
  std::size_t clamped = 0;  // labeled probabilities raised to kProbabilityFloor
};

/// Mean negative log-likelihood of the labeled classes. probs is [N, K].
template <typename T>
LossResult<T> nll_loss(const BasicTensor<T>& probs, std::span<const int> labels);

/// Mean squared error. preds is [N, 1] or [N].
template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& preds, std::span<const float> labels);

extern template LossResult<float> nll_loss(const BasicTensor<float>&, std::span<const int>);
extern template LossResult<double> nll_loss(const BasicTensor<double>&, std::span<const int>);
extern template LossResult<float> mse_loss(const BasicTensor<float>&, std::span<const float>);
extern template LossResult<double> mse_loss(const BasicTensor<double>&, std::span<const float>);

}  // namespace steer::nn
