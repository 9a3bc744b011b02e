#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "steer/nn/layers.hpp"
#include "steer/nn/tensor.hpp"

namespace steer::nn {

/// Sequential stack of layers with parameters, gradients, and a private RNG
/// for dropout masks. Not internally synchronized.
template <typename T>
class BasicNetwork {
 public:
  BasicNetwork(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t seed);

  BasicNetwork(const BasicNetwork& other);
  BasicNetwork& operator=(const BasicNetwork& other);
  BasicNetwork(BasicNetwork&&) noexcept = default;
  BasicNetwork& operator=(BasicNetwork&&) noexcept = default;
  ~BasicNetwork() = default;

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const;
  std::vector<LayerSpec> specs() const;
  std::uint64_t seed() const noexcept { return seed_; }

  std::size_t layer_count() const noexcept { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
  const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

  Mode mode() const noexcept { return mode_; }
  void set_mode(Mode m) noexcept { mode_ = m; }

  std::mt19937_64& rng() noexcept { return rng_; }

  /// Accepts [N, input...] or a single unbatched sample [input...]; the
  /// result always carries a batch extent.
  BasicTensor<T> forward(const BasicTensor<T>& input);
  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad = false);

  void zero_grad();
  std::vector<BasicTensor<T>*> parameters();
  std::vector<const BasicTensor<T>*> parameters() const;
  std::vector<BasicTensor<T>*> gradients();
  std::size_t parameter_count() const;

  /// Copies every parameter from a network with identical topology.
  void copy_parameters_from(const BasicNetwork& other);
  /// Marks layers [first, last) trainable or frozen.
  void set_trainable(std::size_t first, std::size_t last, bool trainable);

  template <typename U>
  BasicNetwork<U> cast() const {
    BasicNetwork<U> out(input_shape_, specs(), seed_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    out.set_mode(mode_);
    return out;
  }

 private:
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  Mode mode_ = Mode::eval;
  bool has_forward_ = false;
};

using Network = BasicNetwork<float>;
using Network64 = BasicNetwork<double>;

extern template class BasicNetwork<float>;
extern template class BasicNetwork<double>;

}  // namespace steer::nn
