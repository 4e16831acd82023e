#pragma once

#include "gramsr/checkpoint.hpp"
#include "gramsr/codec.hpp"
#include "gramsr/config.hpp"
#include "gramsr/denoiser.hpp"
#include "gramsr/featenc.hpp"
#include "gramsr/image.hpp"

namespace gramsr {

// Seeded base denoiser plus the conditioning adapter, untrained.
DenoiserParams build_model(const RunConfig& cfg);

// Adds the pix, sem and gram sets (zero B) over every registry layer.
void inject_all_lora(DenoiserParams& params, const RunConfig& cfg);

// LQ image prepared for the denoiser: bicubic upsample to HQ size, encode,
// conditioning features of the upsampled image.
struct PreparedInput {
  Image upsampled;
  LatentTensor z_lq;
  FeatureMap features;
};

// The frozen components every path shares: codec and both encoders.
class FrozenParts {
 public:
  explicit FrozenParts(const RunConfig& cfg);

  const Codec& codec() const { return codec_; }
  const FeatureEncoder& conditioning_encoder() const { return cond_; }
  const FeatureEncoder& gram_encoder() const { return gram_; }
  std::size_t scale() const { return scale_; }

  PreparedInput prepare(const Image& lq) const;

 private:
  std::size_t scale_;
  Codec codec_;
  FeatureEncoder cond_;
  FeatureEncoder gram_;
};

// Conditioning tokens of a prepared input under the model's mode.
ConditioningTokens tokens_for(const DenoiserParams& params, const PreparedInput& in);

// decode(z - eps), clipped.
Image restore_from_epsilon(const Codec& codec, const LatentTensor& z_lq, const LatentTensor& eps);

}  // namespace gramsr
