#include "steer/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace steer::nn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'E', 'E', 'R', 'N', 'N', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void magic() {
    need(8);
    if (std::memcmp(bytes_.data(), kMagic, 8) != 0) {
      throw Error(Errc::io, "checkpoint: bad magic (expected STEERNN1)");
    }
    pos_ = 8;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(Errc::io, "checkpoint: truncated file");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> attrs_of(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::conv:
      return {static_cast<std::uint32_t>(s.units), static_cast<std::uint32_t>(s.kernel_h),
              static_cast<std::uint32_t>(s.kernel_w)};
    case LayerKind::dense: return {static_cast<std::uint32_t>(s.units)};
    case LayerKind::dropout: return {std::bit_cast<std::uint32_t>(s.rate)};
    default: return {};
  }
}

LayerSpec spec_from(std::uint32_t tag, const std::vector<std::uint32_t>& a) {
  auto want = [&](std::size_t n) {
    if (a.size() != n) throw Error(Errc::io, "checkpoint: wrong attribute count for layer");
  };
  switch (static_cast<LayerKind>(tag)) {
    case LayerKind::conv: want(3); return LayerSpec::conv(a[0], a[1], a[2]);
    case LayerKind::max_pool: want(0); return LayerSpec::max_pool();
    case LayerKind::dense: want(1); return LayerSpec::dense(a[0]);
    case LayerKind::relu: want(0); return LayerSpec::relu();
    case LayerKind::tanh: want(0); return LayerSpec::tanh();
    case LayerKind::softmax: want(0); return LayerSpec::softmax();
    case LayerKind::dropout: want(1); return LayerSpec::dropout(std::bit_cast<float>(a[0]));
  }
  throw Error(Errc::io, "checkpoint: unknown layer tag " + std::to_string(tag));
}

}  // namespace

std::vector<std::uint8_t> serialize(const Network& net) {
  Writer w;
  w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
  w.u32(static_cast<std::uint32_t>(net.input_shape().size()));
  for (auto e : net.input_shape()) w.u32(static_cast<std::uint32_t>(e));
  w.u32(static_cast<std::uint32_t>(net.layer_count()));
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    const LayerSpec spec = net.layer(i).spec();
    w.u32(static_cast<std::uint32_t>(spec.kind));
    const auto attrs = attrs_of(spec);
    w.u32(static_cast<std::uint32_t>(attrs.size()));
    for (auto a : attrs) w.u32(a);
    const auto params = net.layer(i).cparams();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
      w.u32(static_cast<std::uint32_t>(p->rank()));
      for (auto e : p->shape()) w.u32(static_cast<std::uint32_t>(e));
      for (float v : p->values()) w.f32(v);
    }
  }
  return std::move(w.out);
}

Network deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.magic();
  Shape input(r.u32());
  for (auto& e : input) e = r.u32();
  const std::uint32_t layers = r.u32();
  std::vector<LayerSpec> specs;
  std::vector<std::vector<Tensor>> tensors;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const std::uint32_t tag = r.u32();
    std::vector<std::uint32_t> attrs(r.u32());
    for (auto& a : attrs) a = r.u32();
    specs.push_back(spec_from(tag, attrs));
    std::vector<Tensor> params(r.u32());
    for (auto& t : params) {
      Shape s(r.u32());
      for (auto& e : s) e = r.u32();
      std::vector<float> values(shape_size(s));
      for (auto& v : values) v = r.f32();
      t = Tensor(std::move(s), std::move(values));
    }
    tensors.push_back(std::move(params));
  }
  if (!r.done()) throw Error(Errc::io, "checkpoint: trailing bytes");

  Network net(input, specs, 0);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto params = net.layer(i).params();
    if (params.size() != tensors[i].size()) {
      throw Error(Errc::io, "checkpoint: parameter count mismatch in layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k]->shape() != tensors[i][k].shape()) {
        throw Error(Errc::io, "checkpoint: parameter shape mismatch in layer " + std::to_string(i));
      }
      *params[k] = std::move(tensors[i][k]);
    }
  }
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize(net);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(Errc::io, "cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::io, "failed writing checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::missing_input, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace steer::nn
