#include "steer/nn/losses.hpp"

#include <algorithm>
#include <cmath>

namespace steer::nn {

template <typename T>
LossResult<T> nll_loss(const BasicTensor<T>& probs, std::span<const int> labels) {
  if (probs.rank() != 2 || probs.dim(0) != labels.size() || labels.empty()) {
    throw Error(Errc::shape_mismatch, "nll_loss: probabilities " + shape_string(probs.shape()) +
                                          " do not match " + std::to_string(labels.size()) +
                                          " labels");
  }
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  LossResult<T> r;
  r.grad = BasicTensor<T>(probs.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw Error(Errc::invalid_argument, "nll_loss: label " + std::to_string(label) +
                                              " out of range for " + std::to_string(k) +
                                              " classes");
    }
    double p = static_cast<double>(probs[i * k + static_cast<std::size_t>(label)]);
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++r.clamped;
    }
    total -= std::log(p);
    r.grad[i * k + static_cast<std::size_t>(label)] = static_cast<T>(-1.0 / (p * n));
  }
  r.value = total / static_cast<double>(n);
  return r;
}

template <typename T>
LossResult<T> mse_loss(const BasicTensor<T>& preds, std::span<const float> labels) {
  if (labels.empty()) throw Error(Errc::invalid_argument, "mse_loss: empty batch");
  if (preds.size() != labels.size() || preds.dim(0) != labels.size()) {
    throw Error(Errc::shape_mismatch, "mse_loss: predictions " + shape_string(preds.shape()) +
                                          " do not match " + std::to_string(labels.size()) +
                                          " labels");
  }
  const double n = static_cast<double>(labels.size());
  LossResult<T> r;
  r.grad = BasicTensor<T>(preds.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double diff = static_cast<double>(preds[i]) - static_cast<double>(labels[i]);
    total += diff * diff;
    r.grad[i] = static_cast<T>(2.0 * diff / n);
  }
  r.value = total / n;
  return r;
}

template LossResult<float> nll_loss(const BasicTensor<float>&, std::span<const int>);
template LossResult<double> nll_loss(const BasicTensor<double>&, std::span<const int>);
template LossResult<float> mse_loss(const BasicTensor<float>&, std::span<const float>);
template LossResult<double> mse_loss(const BasicTensor<double>&, std::span<const float>);

}  // namespace steer::nn
