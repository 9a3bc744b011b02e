#pragma once

#include <span>
#include <vector>

#include "steer/nn/tensor.hpp"
#include "steer/sim/render.hpp"

namespace steer::learn {

/// Per-sample network input shape for observations of the given size.
inline nn::Shape observation_shape(std::size_t height, std::size_t width) {
  return {sim::Observation::kChannels, height, width};
}
inline nn::Shape observation_shape(const sim::Observation& o) {
  return observation_shape(o.height, o.width);
}

/// Dequantizes observations into an [N, 6, H, W] batch.
nn::Tensor make_batch(std::span<const sim::Observation* const> obs);
nn::Tensor make_batch(const std::vector<sim::Observation>& all, std::span<const std::size_t> indices);
nn::Tensor make_batch(const sim::Observation& o);

}  // namespace steer::learn
