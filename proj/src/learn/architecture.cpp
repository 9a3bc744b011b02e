#include "steer/learn/architecture.hpp"

namespace steer::learn {

using nn::LayerSpec;

namespace {

std::vector<LayerSpec> trunk_and_hidden(const ArchitectureOptions& opts) {
  std::vector<LayerSpec> s;
  for (std::size_t channels : {6, 8, 16, 16}) {
    s.push_back(LayerSpec::conv(channels, 4, 4));
    s.push_back(LayerSpec::relu());
    s.push_back(LayerSpec::max_pool());
  }
  s.push_back(LayerSpec::dense(100));
  s.push_back(LayerSpec::relu());
  s.push_back(LayerSpec::dropout(opts.dropout_rate));
  return s;
}

}  // namespace

std::vector<LayerSpec> policy_specs(const ArchitectureOptions& opts) {
  auto s = trunk_and_hidden(opts);
  s.push_back(LayerSpec::dense(kActionCount));
  s.push_back(LayerSpec::softmax());
  return s;
}

std::vector<LayerSpec> scalar_head_specs(const ArchitectureOptions& opts) {
  auto s = trunk_and_hidden(opts);
  s.push_back(LayerSpec::dense(1));
  s.push_back(LayerSpec::tanh());
  return s;
}

std::vector<LayerSpec> q_specs(const ArchitectureOptions& opts) {
  auto s = trunk_and_hidden(opts);
  s.push_back(LayerSpec::dense(kActionCount));
  return s;
}

nn::Network make_policy_net(const nn::Shape& input, std::uint64_t seed,
                            const ArchitectureOptions& opts) {
  return nn::Network(input, policy_specs(opts), seed);
}

nn::Network make_scalar_net(const nn::Shape& input, std::uint64_t seed,
                            const ArchitectureOptions& opts) {
  return nn::Network(input, scalar_head_specs(opts), seed);
}

nn::Network make_q_net(const nn::Shape& input, std::uint64_t seed,
                       const ArchitectureOptions& opts) {
  return nn::Network(input, q_specs(opts), seed);
}

void copy_trunk(const nn::Network& source, nn::Network& target) {
  if (source.input_shape() != target.input_shape() || source.layer_count() < kTrunkLayers ||
      target.layer_count() < kTrunkLayers) {
    throw Error(Errc::shape_mismatch, "trunk copy between incompatible networks");
  }
  const auto src_specs = source.specs();
  const auto dst_specs = target.specs();
  for (std::size_t i = 0; i < kTrunkLayers; ++i) {
    if (!(src_specs[i] == dst_specs[i])) {
      throw Error(Errc::shape_mismatch, "trunk layer " + std::to_string(i) + " differs");
    }
  }
  for (std::size_t i = 0; i < kTrunkLayers; ++i) {
    auto from = source.layer(i).cparams();
    auto to = target.layer(i).params();
    for (std::size_t k = 0; k < from.size(); ++k) *to[k] = *from[k];
  }
}

std::size_t last_dense_layer(const nn::Network& net) {
  for (std::size_t i = net.layer_count(); i-- > 0;) {
    if (net.layer(i).kind() == nn::LayerKind::dense) return i;
  }
  throw Error(Errc::shape_mismatch, "network has no dense layer");
}

}  // namespace steer::learn
