#include "gramsr/codec.hpp"

#include <algorithm>

#include "gramsr/error.hpp"

namespace gramsr {

LatentTensor LatentTensor::from_var(const ad::Var& v) {
  if (v.shape().size() != 3) throw ShapeError("latent: expected [h,w,c] tensor");
  LatentTensor z(v.dim(0), v.dim(1), v.dim(2));
  std::copy(v.value().begin(), v.value().end(), z.data.begin());
  return z;
}

LatentTensor operator-(const LatentTensor& a, const LatentTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("latent subtraction: shape mismatch");
  LatentTensor out(a.height, a.width, a.channels);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

LatentTensor operator+(const LatentTensor& a, const LatentTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("latent addition: shape mismatch");
  LatentTensor out(a.height, a.width, a.channels);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

Codec::Codec(std::size_t stride) : stride_(stride) {
  if (stride_ < 1) throw ConfigError("codec: stride must be >= 1");
}

std::vector<std::int64_t> Codec::encode_indices(std::size_t h, std::size_t w, std::size_t c) const {
  if (h % stride_ || w % stride_)
    throw SizeError("codec: " + std::to_string(h) + "x" + std::to_string(w) +
                    " not divisible by stride " + std::to_string(stride_));
  const std::size_t lh = h / stride_, lw = w / stride_, lc = c * stride_ * stride_;
  std::vector<std::int64_t> idx(lh * lw * lc);
  for (std::size_t y = 0; y < lh; ++y)
    for (std::size_t x = 0; x < lw; ++x)
      for (std::size_t dy = 0; dy < stride_; ++dy)
        for (std::size_t dx = 0; dx < stride_; ++dx)
          for (std::size_t k = 0; k < c; ++k) {
            const std::size_t ch = (dy * stride_ + dx) * c + k;
            idx[(y * lw + x) * lc + ch] =
                static_cast<std::int64_t>(((y * stride_ + dy) * w + x * stride_ + dx) * c + k);
          }
  return idx;
}

LatentTensor Codec::encode(const Image& x) const {
  const auto idx = encode_indices(x.height, x.width, x.channels);
  LatentTensor z(x.height / stride_, x.width / stride_, x.channels * stride_ * stride_);
  for (std::size_t i = 0; i < idx.size(); ++i) z.data[i] = x.data[static_cast<std::size_t>(idx[i])];
  return z;
}

Image Codec::decode(const LatentTensor& z) const {
  const std::size_t s2 = stride_ * stride_;
  if (z.channels == 0 || z.channels % s2)
    throw ShapeError("codec: latent channels " + std::to_string(z.channels) +
                     " not divisible by stride^2 = " + std::to_string(s2));
  Image x(z.height * stride_, z.width * stride_, z.channels / s2);
  const auto idx = encode_indices(x.height, x.width, x.channels);
  for (std::size_t i = 0; i < idx.size(); ++i) x.data[static_cast<std::size_t>(idx[i])] = z.data[i];
  return x;
}

Image Codec::decode_clipped(const LatentTensor& z) const { return clip01(decode(z)); }

ad::Var Codec::encode(const ad::Var& x) const {
  if (x.shape().size() != 3) throw ShapeError("codec: expected [H,W,C] tensor");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  return ad::gather(x, encode_indices(h, w, c), {h / stride_, w / stride_, c * stride_ * stride_});
}

ad::Var Codec::decode(const ad::Var& z) const {
  if (z.shape().size() != 3) throw ShapeError("codec: expected [h,w,c] latent tensor");
  const std::size_t s2 = stride_ * stride_;
  if (z.dim(2) == 0 || z.dim(2) % s2) throw ShapeError("codec: latent channels not divisible by stride^2");
  const std::size_t h = z.dim(0) * stride_, w = z.dim(1) * stride_, c = z.dim(2) / s2;
  const auto fwd = encode_indices(h, w, c);
  std::vector<std::int64_t> inv(fwd.size());
  for (std::size_t i = 0; i < fwd.size(); ++i) inv[static_cast<std::size_t>(fwd[i])] = static_cast<std::int64_t>(i);
  return ad::gather(z, std::move(inv), {h, w, c});
}

}  // namespace gramsr
