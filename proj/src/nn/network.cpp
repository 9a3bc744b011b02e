#include "steer/nn/network.hpp"

#include <cmath>
#include <utility>

namespace steer::nn {

template <typename T>
BasicNetwork<T>::BasicNetwork(Shape input_shape, std::vector<LayerSpec> specs, std::uint64_t seed)
    : input_shape_(std::move(input_shape)), seed_(seed), rng_(seed) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw Error(Errc::shape_mismatch, "network input shape must be non-empty");
  }
  Shape current = input_shape_;
  layers_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    try {
      layers_.push_back(make_layer<T>(specs[i], current));
    } catch (const Error& e) {
      throw Error(e.code(), "layer " + std::to_string(i) + " (" +
                                std::string(to_string(specs[i].kind)) + "): " + e.what());
    }
    current = layers_.back()->output_shape();
  }
  std::mt19937_64 init_rng(seed);
  for (auto& layer : layers_) layer->initialize(init_rng);
}

template <typename T>
BasicNetwork<T>::BasicNetwork(const BasicNetwork& other)
    : input_shape_(other.input_shape_),
      seed_(other.seed_),
      rng_(other.rng_),
      mode_(other.mode_),
      has_forward_(other.has_forward_) {
  layers_.reserve(other.layers_.size());
  for (const auto& layer : other.layers_) layers_.push_back(layer->clone());
}

template <typename T>
BasicNetwork<T>& BasicNetwork<T>::operator=(const BasicNetwork& other) {
  if (this != &other) {
    BasicNetwork tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

template <typename T>
const Shape& BasicNetwork<T>::output_shape() const {
  return layers_.empty() ? input_shape_ : layers_.back()->output_shape();
}

template <typename T>
std::vector<LayerSpec> BasicNetwork<T>::specs() const {
  std::vector<LayerSpec> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(layer->spec());
  return out;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::forward(const BasicTensor<T>& input) {
  const Shape& in = input.shape();
  BasicTensor<T> x;
  if (in == input_shape_) {
    Shape s{1};
    s.insert(s.end(), in.begin(), in.end());
    x = input;
    x.reshape(std::move(s));
  } else if (in.size() == input_shape_.size() + 1 && in[0] > 0 &&
             std::equal(input_shape_.begin(), input_shape_.end(), in.begin() + 1)) {
    x = input;
  } else {
    const std::string first =
        layers_.empty() ? std::string("input") : std::string(to_string(layers_[0]->kind()));
    throw Error(Errc::shape_mismatch, "layer 0 (" + first + ") expects input " +
                                          shape_string(input_shape_) + ", got " +
                                          shape_string(in));
  }
  for (auto& layer : layers_) x = layer->forward(x, mode_, rng_);
  has_forward_ = true;
  return x;
}

template <typename T>
BasicTensor<T> BasicNetwork<T>::backward(const BasicTensor<T>& grad_out, bool need_input_grad) {
  if (!has_forward_) {
    throw Error(Errc::bad_state, "backward called without a preceding forward pass");
  }
  BasicTensor<T> g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need = need_input_grad || i > 0;
    g = layers_[i]->backward(g, need);
  }
  has_forward_ = false;
  return g;
}

template <typename T>
void BasicNetwork<T>::zero_grad() {
  for (auto* g : gradients()) g->fill(T{0});
}

template <typename T>
std::vector<BasicTensor<T>*> BasicNetwork<T>::parameters() {
  std::vector<BasicTensor<T>*> out;
  for (auto& layer : layers_) {
    for (auto* p : layer->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> BasicNetwork<T>::parameters() const {
  std::vector<const BasicTensor<T>*> out;
  for (const auto& layer : layers_) {
    for (const auto* p : std::as_const(*layer).cparams()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>*> BasicNetwork<T>::gradients() {
  std::vector<BasicTensor<T>*> out;
  for (auto& layer : layers_) {
    for (auto* g : layer->grads()) out.push_back(g);
  }
  return out;
}

template <typename T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
void BasicNetwork<T>::copy_parameters_from(const BasicNetwork& other) {
  if (other.input_shape_ != input_shape_ || other.specs() != specs()) {
    throw Error(Errc::shape_mismatch, "cannot copy parameters between different topologies");
  }
  auto dst = parameters();
  auto src = other.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
}

template <typename T>
void BasicNetwork<T>::set_trainable(std::size_t first, std::size_t last, bool trainable) {
  for (std::size_t i = first; i < last && i < layers_.size(); ++i) {
    layers_[i]->set_trainable(trainable);
  }
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

}  // namespace steer::nn
