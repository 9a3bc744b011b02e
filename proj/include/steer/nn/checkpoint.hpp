#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "steer/nn/network.hpp"

namespace steer::nn {

/// STEERNN1 layout (all integers little-endian u32, parameters f32):
///   "STEERNN1" | input rank | input extents | layer count |
///   per layer: kind tag | attr count | attrs | tensor count |
///              per tensor: rank | extents | values
/// Dropout stores its rate as the bit pattern of an f32 attr.
std::vector<std::uint8_t> serialize(const Network& net);
Network deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace steer::nn
