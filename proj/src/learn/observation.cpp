#include "steer/learn/observation.hpp"

#include <array>

#include "steer/error.hpp"

namespace steer::learn {

namespace {

const std::array<float, 256>& dequantize_table() {
  static const std::array<float, 256> table = [] {
    std::array<float, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = static_cast<float>(i) / 255.0f;
    return t;
  }();
  return table;
}

}  // namespace

nn::Tensor make_batch(std::span<const sim::Observation* const> obs) {
  if (obs.empty()) throw Error(Errc::invalid_argument, "empty observation batch");
  const auto& first = *obs[0];
  const std::size_t per = first.pixels.size();
  nn::Tensor out({obs.size(), sim::Observation::kChannels, first.height, first.width});
  const auto& lut = dequantize_table();
  float* dst = out.data();
  for (const sim::Observation* o : obs) {
    if (o->height != first.height || o->width != first.width || o->pixels.size() != per) {
      throw Error(Errc::shape_mismatch, "observations in one batch differ in size");
    }
    for (std::uint8_t v : o->pixels) *dst++ = lut[v];
  }
  return out;
}

nn::Tensor make_batch(const std::vector<sim::Observation>& all, std::span<const std::size_t> indices) {
  std::vector<const sim::Observation*> ptrs;
  ptrs.reserve(indices.size());
  for (std::size_t i : indices) ptrs.push_back(&all.at(i));
  return make_batch(ptrs);
}

nn::Tensor make_batch(const sim::Observation& o) {
  const sim::Observation* p = &o;
  return make_batch(std::span<const sim::Observation* const>(&p, 1));
}

}  // namespace steer::learn
