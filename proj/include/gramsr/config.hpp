#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramsr/degrade.hpp"
#include "gramsr/denoiser.hpp"
#include "gramsr/featenc.hpp"
#include "gramsr/losses.hpp"

namespace gramsr {

struct Seeds {
  std::uint64_t init = 7;
  std::uint64_t data = 1234;
  std::uint64_t train = 99;
  friend bool operator==(const Seeds&, const Seeds&) = default;
};

// Everything needed to reproduce a run. Serialized as a single JSON document.
struct RunConfig {
  // Empty directories select the procedural texture corpus.
  std::string train_dir;
  std::string val_dir;
  std::size_t synthetic_train_count = 16;
  std::size_t synthetic_val_count = 8;
  std::size_t patches_per_image = 4;

  // HQ crop size; LQ is patch_size / degradation.downscale_factor.
  std::size_t patch_size = 64;
  DegradationConfig degradation;
  std::size_t codec_stride = 4;

  EncoderSpec conditioning_encoder{EncoderRole::conditioning, 8, 2, 32, 1001, true, 3};
  EncoderSpec gram_encoder{EncoderRole::gram, 8, 2, 16, 2002, true, 3};
  GramNorm gram_norm = GramNorm::global_frobenius;
  std::vector<std::size_t> perceptual_layers{0, 1};

  DenoiserArch denoiser;
  std::size_t lora_rank = 4;
  LossWeights loss_weights;

  std::size_t schedule_steps = 200;
  double beta_start = 1e-4;
  double beta_end = 2e-2;
  double cond_dropout = 0.2;

  // Indexed by stage 0..3.
  std::array<double, 4> learning_rate{1e-3, 5e-5, 5e-5, 5e-6};
  std::array<std::size_t, 4> max_steps{400, 200, 200, 200};
  std::size_t batch_size = 16;
  std::size_t eval_every = 20;
  std::size_t patience = 3;

  Seeds seeds;

  // Fills derived fields (latent channels, token count) and checks
  // consistency. Throws ConfigError.
  void finalize();
  DenoiserArch denoiser_arch() const;
  NoiseSchedule schedule() const;
  std::size_t lq_size() const { return patch_size / degradation.downscale_factor; }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

nlohmann::json to_json(const EncoderSpec& spec);
EncoderSpec encoder_spec_from_json(const nlohmann::json& j);

}  // namespace gramsr
