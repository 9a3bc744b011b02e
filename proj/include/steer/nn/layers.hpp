#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "steer/nn/tensor.hpp"

namespace steer::nn {

// Tag values are part of the STEERNN1 checkpoint format; do not renumber.
enum class LayerKind : std::uint32_t {
  conv = 1,
  max_pool = 2,
  dense = 3,
  relu = 4,
  tanh = 5,
  softmax = 6,
  dropout = 7,
};

std::string_view to_string(LayerKind kind);

enum class Mode { train, eval };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;  // conv output channels, dense output units
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  float rate = 0.0f;  // dropout probability

  static LayerSpec conv(std::size_t out_channels, std::size_t kh, std::size_t kw) {
    return {LayerKind::conv, out_channels, kh, kw, 0.0f};
  }
  static LayerSpec max_pool() { return {LayerKind::max_pool, 0, 2, 2, 0.0f}; }
  static LayerSpec dense(std::size_t units) { return {LayerKind::dense, units, 0, 0, 0.0f}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec tanh() { return {LayerKind::tanh}; }
  static LayerSpec softmax() { return {LayerKind::softmax}; }
  static LayerSpec dropout(float rate) { return {LayerKind::dropout, 0, 0, 0, rate}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// One differentiable stage. Shapes passed to and returned from
/// output_shape() are per-sample; tensors through forward/backward carry a
/// leading batch extent.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  LayerKind kind() const { return spec().kind; }
  const Shape& input_shape() const { return input_shape_; }
  const Shape& output_shape() const { return output_shape_; }

  virtual BasicTensor<T> forward(const BasicTensor<T>& in, Mode mode, std::mt19937_64& rng) = 0;
  /// Accumulates parameter gradients. Returns the input gradient, or an empty
  /// tensor when need_input_grad is false.
  virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) = 0;

  virtual std::vector<BasicTensor<T>*> params() { return {}; }
  virtual std::vector<BasicTensor<T>*> grads() { return {}; }
  std::vector<const BasicTensor<T>*> cparams() const {
    auto p = const_cast<Layer*>(this)->params();
    return {p.begin(), p.end()};
  }
  virtual void initialize(std::mt19937_64&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;

  bool trainable() const { return trainable_; }
  void set_trainable(bool v) { trainable_ = v; }

 protected:
  Shape input_shape_;
  Shape output_shape_;
  bool trainable_ = true;
};

/// Builds a layer for the given per-sample input shape. Throws
/// Errc::shape_mismatch if the shape cannot feed this layer kind.
template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape);

}  // namespace steer::nn
