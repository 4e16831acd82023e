#pragma once

#include <cstddef>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/image.hpp"

namespace gramsr {

// H/s x W/s x C*s^2 latent, HWC storage. Values are unconstrained reals.
struct LatentTensor {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  LatentTensor() = default;
  LatentTensor(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  ad::Shape shape() const { return {height, width, channels}; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const LatentTensor& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
  ad::Var to_var() const { return ad::Var::constant(shape(), data); }
  static LatentTensor from_var(const ad::Var& v);

  friend bool operator==(const LatentTensor&, const LatentTensor&) = default;
};

LatentTensor operator-(const LatentTensor& a, const LatentTensor& b);
LatentTensor operator+(const LatentTensor& a, const LatentTensor& b);

// Frozen space-to-depth codec: each s x s x C block of the image becomes one
// latent cell with C*s^2 channels, channel index (dy*s + dx)*C + c.
class Codec {
 public:
  explicit Codec(std::size_t stride = 4);

  std::size_t stride() const { return stride_; }

  LatentTensor encode(const Image& x) const;
  // Exact inverse of encode. Values are not clipped; use decode_clipped at the
  // image-emission boundary.
  Image decode(const LatentTensor& z) const;
  Image decode_clipped(const LatentTensor& z) const;

  // Differentiable forms over [H, W, C] / [h, w, C*s^2] tensors.
  ad::Var encode(const ad::Var& x) const;
  ad::Var decode(const ad::Var& z) const;

  // For each latent element, the flat image index it reads.
  std::vector<std::int64_t> encode_indices(std::size_t h, std::size_t w, std::size_t c) const;

 private:
  std::size_t stride_;
};

}  // namespace gramsr
