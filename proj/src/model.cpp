#include "gramsr/model.hpp"

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

DenoiserParams build_model(const RunConfig& cfg) {
  DenoiserParams p = make_denoiser(cfg.denoiser_arch(), cfg.seeds.init);
  Rng rng(cfg.seeds.init ^ 0xA0A0A0A0ULL);
  register_adapter(p.store, cfg.conditioning_encoder.dim, cfg.denoiser.cond_dim, cfg.denoiser.cond_dim, rng);
  return p;
}

void inject_all_lora(DenoiserParams& params, const RunConfig& cfg) {
  std::uint64_t k = 1;
  for (const char* name : kLoraNames) inject_lora(params, name, cfg.lora_rank, {}, cfg.seeds.init + 1000 * k++);
}

FrozenParts::FrozenParts(const RunConfig& cfg)
    : scale_(cfg.degradation.downscale_factor),
      codec_(cfg.codec_stride),
      cond_(cfg.conditioning_encoder),
      gram_(cfg.gram_encoder) {}

PreparedInput FrozenParts::prepare(const Image& lq) const {
  validate(lq);
  if (lq.channels != 3) throw ShapeError("input must be an RGB image");
  PreparedInput in;
  in.upsampled = upsample_bicubic(lq, scale_);
  const std::size_t m = codec_.stride() * 4;
  if (in.upsampled.height % m || in.upsampled.width % m)
    throw ShapeError("upsampled size must be divisible by " + std::to_string(m));
  in.z_lq = codec_.encode(in.upsampled);
  in.features = cond_.extract(in.upsampled);
  return in;
}

ConditioningTokens tokens_for(const DenoiserParams& params, const PreparedInput& in) {
  if (params.arch.conditioning != ConditioningMode::visual) return {};
  return adapt(in.features, adapter_params(params.store));
}

Image restore_from_epsilon(const Codec& codec, const LatentTensor& z_lq, const LatentTensor& eps) {
  return codec.decode_clipped(z_lq - eps);
}

}  // namespace gramsr
