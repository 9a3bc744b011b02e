#pragma once

#include <cstdint>
#include <vector>

#include "steer/nn/network.hpp"

namespace steer::learn {

inline constexpr std::size_t kActionCount = 3;

/// Layers [0, kTrunkLayers) form the shared convolutional trunk: four
/// conv + ReLU + pool blocks, ending at the fourth pool.
inline constexpr std::size_t kTrunkLayers = 12;

struct ArchitectureOptions {
  float dropout_rate = 0.5f;
};

/// Conv(6)-Conv(8)-Conv(16)-Conv(16) trunk, each 4x4 followed by ReLU and
/// 2x2 max-pooling, then FC-100 (ReLU, dropout) and FC-3 with softmax.
std::vector<nn::LayerSpec> policy_specs(const ArchitectureOptions& opts = {});
/// Policy topology with a single tanh output unit.
std::vector<nn::LayerSpec> scalar_head_specs(const ArchitectureOptions& opts = {});
/// Policy topology without the final softmax.
std::vector<nn::LayerSpec> q_specs(const ArchitectureOptions& opts = {});

nn::Network make_policy_net(const nn::Shape& input, std::uint64_t seed,
                            const ArchitectureOptions& opts = {});
nn::Network make_scalar_net(const nn::Shape& input, std::uint64_t seed,
                            const ArchitectureOptions& opts = {});
nn::Network make_q_net(const nn::Shape& input, std::uint64_t seed,
                       const ArchitectureOptions& opts = {});

/// Copies trunk parameters from `source` into `target`. Both must share the
/// trunk topology and input shape.
void copy_trunk(const nn::Network& source, nn::Network& target);

/// Index of the final Dense layer.
std::size_t last_dense_layer(const nn::Network& net);

}  // namespace steer::learn
