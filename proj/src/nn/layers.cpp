#include "steer/nn/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace steer::nn {

std::string shape_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out.empty() ? "scalar" : out;
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "Conv";
    case LayerKind::max_pool: return "MaxPool";
    case LayerKind::dense: return "Dense";
    case LayerKind::relu: return "ReLU";
    case LayerKind::tanh: return "Tanh";
    case LayerKind::softmax: return "Softmax";
    case LayerKind::dropout: return "Dropout";
  }
  return "Unknown";
}

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

Shape batched(std::size_t n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

template <typename T>
void fan_in_uniform(BasicTensor<T>& w, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.values()) v = static_cast<T>(dist(rng));
}

// Stride-1 convolution with "same" zero padding. For even kernels the extra
// padding row/column goes after the data (top/left pad = (k - 1) / 2).
// Evaluated per sample as im2col + GEMM; the column buffer is rebuilt in
// backward instead of being kept for the whole batch.
template <typename T>
class Conv final : public Layer<T> {
 public:
  Conv(const LayerSpec& spec, const Shape& in) : spec_(spec) {
    if (in.size() != 3 || spec.units == 0 || spec.kernel_h == 0 || spec.kernel_w == 0) {
      throw Error(Errc::shape_mismatch, "Conv needs a CxHxW input, got " + shape_string(in));
    }
    this->input_shape_ = in;
    this->output_shape_ = {spec.units, in[1], in[2]};
    channels_ = in[0];
    height_ = in[1];
    width_ = in[2];
    patch_ = channels_ * spec.kernel_h * spec.kernel_w;
    weight_ = BasicTensor<T>({spec.units, patch_});
    bias_ = BasicTensor<T>({spec.units});
    grad_weight_ = BasicTensor<T>(weight_.shape());
    grad_bias_ = BasicTensor<T>(bias_.shape());
  }

  LayerSpec spec() const override { return spec_; }

  void initialize(std::mt19937_64& rng) override {
    fan_in_uniform(weight_, patch_, rng);
    bias_.fill(T{0});
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    const std::size_t n = in.dim(0);
    const std::size_t plane = height_ * width_;
    const std::size_t out_c = spec_.units;
    input_ = in;
    columns_.resize(patch_ * plane);
    BasicTensor<T> out(batched(n, this->output_shape_));
    ConstMatMap<T> w(weight_.data(), out_c, patch_);
    ConstMatMap<T> col(columns_.data(), patch_, plane);
    const Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(bias_.data(), out_c);
    for (std::size_t b = 0; b < n; ++b) {
      im2col(in.data() + b * channels_ * plane);
      MatMap<T> y(out.data() + b * out_c * plane, out_c, plane);
      y.noalias() = w * col;
      y.colwise() += bias;
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    const std::size_t n = input_.dim(0);
    const std::size_t plane = height_ * width_;
    const std::size_t out_c = spec_.units;
    columns_.resize(patch_ * plane);
    ConstMatMap<T> w(weight_.data(), out_c, patch_);
    MatMap<T> dw(grad_weight_.data(), out_c, patch_);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grad_bias_.data(), out_c);
    ConstMatMap<T> col(columns_.data(), patch_, plane);
    BasicTensor<T> grad_in;
    if (need_input_grad) {
      grad_in = BasicTensor<T>(batched(n, this->input_shape_));
      dcol_.resize(patch_ * plane);
    }
    for (std::size_t b = 0; b < n; ++b) {
      ConstMatMap<T> g(grad_out.data() + b * out_c * plane, out_c, plane);
      im2col(input_.data() + b * channels_ * plane);
      dw.noalias() += g * col.transpose();
      db += g.rowwise().sum();
      if (need_input_grad) {
        MatMap<T>(dcol_.data(), patch_, plane).noalias() = w.transpose() * g;
        col2im(grad_in.data() + b * channels_ * plane);
      }
    }
    return grad_in;
  }

  std::vector<BasicTensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<BasicTensor<T>*> grads() override { return {&grad_weight_, &grad_bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv>(*this); }

 private:
  // Row r = (c, i, j) of the column buffer holds, for every output pixel, the
  // input value under kernel tap (i, j) of channel c (zero in the padding).
  void im2col(const T* img) {
    const long pt = static_cast<long>((spec_.kernel_h - 1) / 2);
    const long pl = static_cast<long>((spec_.kernel_w - 1) / 2);
    const long h = static_cast<long>(height_), w = static_cast<long>(width_);
    T* dst = columns_.data();
    for (std::size_t c = 0; c < channels_; ++c) {
      for (std::size_t i = 0; i < spec_.kernel_h; ++i) {
        for (std::size_t j = 0; j < spec_.kernel_w; ++j) {
          const long dy = static_cast<long>(i) - pt;
          const long dx = static_cast<long>(j) - pl;
          const long x0 = std::clamp(-dx, 0L, w);
          const long x1 = std::clamp(w - dx, x0, w);
          for (long y = 0; y < h; ++y, dst += w) {
            const long sy = y + dy;
            if (sy < 0 || sy >= h) {
              std::fill(dst, dst + w, T{0});
              continue;
            }
            const T* src = img + (c * height_ + static_cast<std::size_t>(sy)) * width_ + dx;
            std::fill(dst, dst + x0, T{0});
            std::copy(src + x0, src + x1, dst + x0);
            std::fill(dst + x1, dst + w, T{0});
          }
        }
      }
    }
  }

  void col2im(T* img) const {
    const long pt = static_cast<long>((spec_.kernel_h - 1) / 2);
    const long pl = static_cast<long>((spec_.kernel_w - 1) / 2);
    const long h = static_cast<long>(height_), w = static_cast<long>(width_);
    const T* src = dcol_.data();
    for (std::size_t c = 0; c < channels_; ++c) {
      for (std::size_t i = 0; i < spec_.kernel_h; ++i) {
        for (std::size_t j = 0; j < spec_.kernel_w; ++j) {
          const long dy = static_cast<long>(i) - pt;
          const long dx = static_cast<long>(j) - pl;
          const long x0 = std::clamp(-dx, 0L, w);
          const long x1 = std::clamp(w - dx, x0, w);
          for (long y = 0; y < h; ++y, src += w) {
            const long sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            T* d = img + (c * height_ + static_cast<std::size_t>(sy)) * width_ + dx;
            for (long x = x0; x < x1; ++x) d[x] += src[x];
          }
        }
      }
    }
  }

  LayerSpec spec_;
  std::size_t channels_ = 0, height_ = 0, width_ = 0, patch_ = 0;
  BasicTensor<T> weight_, bias_, grad_weight_, grad_bias_;
  BasicTensor<T> input_;
  AlignedVector<T> columns_;
  AlignedVector<T> dcol_;
};

// 2x2 stride-2 max pooling; trailing odd rows/columns are dropped.
template <typename T>
class MaxPool final : public Layer<T> {
 public:
  explicit MaxPool(const Shape& in) {
    if (in.size() != 3 || in[1] < 2 || in[2] < 2) {
      throw Error(Errc::shape_mismatch, "MaxPool needs a CxHxW input with H,W >= 2, got " +
                                            shape_string(in));
    }
    this->input_shape_ = in;
    this->output_shape_ = {in[0], in[1] / 2, in[2] / 2};
  }

  LayerSpec spec() const override { return LayerSpec::max_pool(); }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    const std::size_t n = in.dim(0);
    const std::size_t c = this->input_shape_[0], h = this->input_shape_[1],
                      w = this->input_shape_[2];
    const std::size_t oh = h / 2, ow = w / 2;
    BasicTensor<T> out(batched(n, this->output_shape_));
    argmax_.resize(out.size());
    std::size_t k = 0;
    for (std::size_t bc = 0; bc < n * c; ++bc) {
      const T* src = in.data() + bc * h * w;
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++k) {
          std::size_t best = (2 * y) * w + 2 * x;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t q : cand) {
            if (src[q] > src[best]) best = q;
          }
          out[k] = src[best];
          argmax_[k] = static_cast<std::uint32_t>(bc * h * w + best);
        }
      }
    }
    batch_ = n;
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    if (!need_input_grad) return {};
    BasicTensor<T> grad_in(batched(batch_, this->input_shape_));
    for (std::size_t k = 0; k < grad_out.size(); ++k) grad_in[argmax_[k]] += grad_out[k];
    return grad_in;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<MaxPool>(*this); }

 private:
  std::vector<std::uint32_t> argmax_;
  std::size_t batch_ = 0;
};

// Fully connected layer over the flattened per-sample input.
template <typename T>
class Dense final : public Layer<T> {
 public:
  Dense(const LayerSpec& spec, const Shape& in) : spec_(spec) {
    if (in.empty() || spec.units == 0) {
      throw Error(Errc::shape_mismatch, "Dense needs a non-empty input, got " + shape_string(in));
    }
    this->input_shape_ = in;
    this->output_shape_ = {spec.units};
    in_features_ = shape_size(in);
    weight_ = BasicTensor<T>({spec.units, in_features_});
    bias_ = BasicTensor<T>({spec.units});
    grad_weight_ = BasicTensor<T>(weight_.shape());
    grad_bias_ = BasicTensor<T>(bias_.shape());
  }

  LayerSpec spec() const override { return spec_; }

  void initialize(std::mt19937_64& rng) override {
    fan_in_uniform(weight_, in_features_, rng);
    bias_.fill(T{0});
  }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    const std::size_t n = in.dim(0);
    input_ = in;
    BasicTensor<T> out({n, spec_.units});
    MatMap<T> y(out.data(), n, spec_.units);
    y.noalias() = ConstMatMap<T>(in.data(), n, in_features_) *
                  ConstMatMap<T>(weight_.data(), spec_.units, in_features_).transpose();
    y.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias_.data(), spec_.units);
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    const std::size_t n = grad_out.dim(0);
    ConstMatMap<T> g(grad_out.data(), n, spec_.units);
    ConstMatMap<T> x(input_.data(), n, in_features_);
    MatMap<T>(grad_weight_.data(), spec_.units, in_features_).noalias() += g.transpose() * x;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_bias_.data(), spec_.units) +=
        g.colwise().sum();
    if (!need_input_grad) return {};
    BasicTensor<T> grad_in(batched(n, this->input_shape_));
    MatMap<T>(grad_in.data(), n, in_features_).noalias() =
        g * ConstMatMap<T>(weight_.data(), spec_.units, in_features_);
    return grad_in;
  }

  std::vector<BasicTensor<T>*> params() override { return {&weight_, &bias_}; }
  std::vector<BasicTensor<T>*> grads() override { return {&grad_weight_, &grad_bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  LayerSpec spec_;
  std::size_t in_features_ = 0;
  BasicTensor<T> weight_, bias_, grad_weight_, grad_bias_;
  BasicTensor<T> input_;
};

template <typename T>
class Relu final : public Layer<T> {
 public:
  explicit Relu(const Shape& in) {
    this->input_shape_ = in;
    this->output_shape_ = in;
  }
  LayerSpec spec() const override { return LayerSpec::relu(); }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    BasicTensor<T> out = in;
    for (auto& v : out.values()) v = v > T{0} ? v : T{0};
    output_ = out;
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    if (!need_input_grad) return {};
    BasicTensor<T> grad_in = grad_out;
    for (std::size_t i = 0; i < grad_in.size(); ++i) {
      if (!(output_[i] > T{0})) grad_in[i] = T{0};
    }
    return grad_in;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  BasicTensor<T> output_;
};

template <typename T>
class Tanh final : public Layer<T> {
 public:
  explicit Tanh(const Shape& in) {
    this->input_shape_ = in;
    this->output_shape_ = in;
  }
  LayerSpec spec() const override { return LayerSpec::tanh(); }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    BasicTensor<T> out = in;
    for (auto& v : out.values()) v = std::tanh(v);
    output_ = out;
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    if (!need_input_grad) return {};
    BasicTensor<T> grad_in = grad_out;
    for (std::size_t i = 0; i < grad_in.size(); ++i) {
      grad_in[i] *= T{1} - output_[i] * output_[i];
    }
    return grad_in;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Tanh>(*this); }

 private:
  BasicTensor<T> output_;
};

template <typename T>
class Softmax final : public Layer<T> {
 public:
  explicit Softmax(const Shape& in) {
    if (in.size() != 1) {
      throw Error(Errc::shape_mismatch, "Softmax needs a flat input, got " + shape_string(in));
    }
    this->input_shape_ = in;
    this->output_shape_ = in;
  }
  LayerSpec spec() const override { return LayerSpec::softmax(); }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode, std::mt19937_64&) override {
    const std::size_t n = in.dim(0), k = in.dim(1);
    BasicTensor<T> out = in;
    for (std::size_t b = 0; b < n; ++b) {
      T* row = out.data() + b * k;
      const T peak = *std::max_element(row, row + k);
      T total{0};
      for (std::size_t i = 0; i < k; ++i) {
        row[i] = std::exp(row[i] - peak);
        total += row[i];
      }
      for (std::size_t i = 0; i < k; ++i) row[i] /= total;
    }
    output_ = out;
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    if (!need_input_grad) return {};
    const std::size_t n = grad_out.dim(0), k = grad_out.dim(1);
    BasicTensor<T> grad_in(grad_out.shape());
    for (std::size_t b = 0; b < n; ++b) {
      const T* y = output_.data() + b * k;
      const T* g = grad_out.data() + b * k;
      T dot{0};
      for (std::size_t i = 0; i < k; ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < k; ++i) grad_in[b * k + i] = y[i] * (g[i] - dot);
    }
    return grad_in;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Softmax>(*this); }

 private:
  BasicTensor<T> output_;
};

// Inverted dropout: kept units are scaled by 1/(1-rate) in training so the
// evaluation pass is the identity.
template <typename T>
class Dropout final : public Layer<T> {
 public:
  Dropout(const LayerSpec& spec, const Shape& in) : spec_(spec) {
    if (!(spec.rate >= 0.0f && spec.rate < 1.0f)) {
      throw Error(Errc::invalid_argument, "Dropout rate must lie in [0, 1)");
    }
    this->input_shape_ = in;
    this->output_shape_ = in;
  }
  LayerSpec spec() const override { return spec_; }

  BasicTensor<T> forward(const BasicTensor<T>& in, Mode mode, std::mt19937_64& rng) override {
    if (mode == Mode::eval || spec_.rate == 0.0f) {
      mask_.clear();
      return in;
    }
    const T scale = T{1} / (T{1} - static_cast<T>(spec_.rate));
    std::bernoulli_distribution keep(1.0 - static_cast<double>(spec_.rate));
    mask_.resize(in.size());
    BasicTensor<T> out = in;
    for (std::size_t i = 0; i < out.size(); ++i) {
      mask_[i] = keep(rng) ? scale : T{0};
      out[i] *= mask_[i];
    }
    return out;
  }

  BasicTensor<T> backward(const BasicTensor<T>& grad_out, bool need_input_grad) override {
    if (!need_input_grad) return {};
    BasicTensor<T> grad_in = grad_out;
    if (!mask_.empty()) {
      for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] *= mask_[i];
    }
    return grad_in;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  LayerSpec spec_;
  AlignedVector<T> mask_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec, const Shape& input_shape) {
  switch (spec.kind) {
    case LayerKind::conv: return std::make_unique<Conv<T>>(spec, input_shape);
    case LayerKind::max_pool: return std::make_unique<MaxPool<T>>(input_shape);
    case LayerKind::dense: return std::make_unique<Dense<T>>(spec, input_shape);
    case LayerKind::relu: return std::make_unique<Relu<T>>(input_shape);
    case LayerKind::tanh: return std::make_unique<Tanh<T>>(input_shape);
    case LayerKind::softmax: return std::make_unique<Softmax<T>>(input_shape);
    case LayerKind::dropout: return std::make_unique<Dropout<T>>(spec, input_shape);
  }
  throw Error(Errc::invalid_argument, "unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&, const Shape&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&, const Shape&);

}  // namespace steer::nn
