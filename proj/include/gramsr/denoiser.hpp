#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/codec.hpp"
#include "gramsr/featenc.hpp"
#include "gramsr/params.hpp"

namespace gramsr {

enum class ConditioningMode { visual, fixed_tensor, learnable_tensor };

std::string to_string(ConditioningMode mode);
ConditioningMode conditioning_mode_from_string(const std::string& s);

struct DenoiserArch {
  std::size_t latent_channels = 48;
  std::size_t base_width = 32;
  std::size_t cond_dim = 32;
  // Token count of the fixed / learnable conditioning block.
  std::size_t cond_tokens = 64;
  std::size_t attn_dim = 32;
  std::size_t time_dim = 32;
  // Timestep fed to the network on the single-step restoration path.
  double sr_timestep = 50.0;
  ConditioningMode conditioning = ConditioningMode::visual;

  friend bool operator==(const DenoiserArch&, const DenoiserArch&) = default;
};

enum class LayerKind { conv3x3, linear };

// A LoRA-targetable layer. `in` is the flattened fan-in (9*Cin for convs).
struct LayerSpec {
  std::string name;
  LayerKind kind;
  std::size_t in;
  std::size_t out;
};

// Conv and MLP layers of the network, in forward order.
std::vector<LayerSpec> layer_registry(const DenoiserArch& arch);

struct LoRAActivation {
  bool pix = false;
  bool sem = false;
  bool gram = false;

  static LoRAActivation none() { return {}; }
  // Monotone prefixes of pix -> sem -> gram; level 0 is the bare backbone.
  static LoRAActivation prefix(int level);
  bool is_active(const std::string& set_name) const;

  friend bool operator==(const LoRAActivation&, const LoRAActivation&) = default;
};

inline constexpr const char* kLoraNames[3] = {"pix", "sem", "gram"};

// Per-target factors live in the parameter store as
// lora.<name>.<layer>.A [rank, in] and lora.<name>.<layer>.B [out, rank].
struct LoRAParamSet {
  std::string name;
  std::size_t rank = 4;
  double scaling = 0.25;
  std::vector<std::string> targets;
  bool trainable = false;

  std::string group() const { return "lora." + name; }
  friend bool operator==(const LoRAParamSet&, const LoRAParamSet&) = default;
};

struct DenoiserParams {
  DenoiserArch arch;
  // Every trainable quantity of the model: base, adapter, lora.*, cond_tensor.
  ParamStore store;
  std::vector<LoRAParamSet> lora_sets;
  bool base_frozen = false;

  const LoRAParamSet* find_set(const std::string& name) const;
  friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;
};

// Registers seeded base weights (and the conditioning block for the tensor
// modes) in group `base` / `cond_tensor`.
DenoiserParams make_denoiser(const DenoiserArch& arch, std::uint64_t seed);

// Adds a zero-B low-rank set. Empty `targets` means every registry layer.
const LoRAParamSet& inject_lora(DenoiserParams& params, const std::string& name, std::size_t rank,
                                std::vector<std::string> targets, std::uint64_t seed);

// Trainable groups per stage:
//   0: base            1: lora.pix + conditioning      2: lora.sem + conditioning
//   3: lora.gram
// where "conditioning" is the adapter (visual mode) or the learnable block.
void set_stage_trainability(int stage, DenoiserParams& params);

// Conditioning tokens for the configured mode: adapter(features) for visual,
// a zero block for fixed_tensor, the learned block for learnable_tensor.
ad::Var conditioning_tokens(const DenoiserParams& params, ParamBinder& binder, const ad::Var& features);
ad::Var null_conditioning(const DenoiserParams& params, std::size_t rows);

// Differentiable forward pass over [h, w, C] latents. Registered layer weights
// are replaced by W + sum_active scaling * B A.
ad::Var denoiser_forward(const DenoiserParams& params, ParamBinder& binder, const ad::Var& z,
                         const ad::Var& cond, const LoRAActivation& act, double timestep);

// Value-level prediction at the restoration timestep.
LatentTensor predict(const DenoiserParams& params, const LatentTensor& z, const ConditioningTokens& cond,
                     const LoRAActivation& act);

// Effective weight of one registry layer under an activation.
ad::Var effective_weight(const DenoiserParams& params, ParamBinder& binder, const std::string& layer,
                         const LoRAActivation& act);

// Applies a registry layer (weight + LoRA, bias) to x: conv3x3 on [H,W,Cin]
// or a linear map on [rows, in].
ad::Var apply_layer(const DenoiserParams& params, ParamBinder& binder, const LayerSpec& layer,
                    const ad::Var& x, const LoRAActivation& act);

std::vector<double> timestep_embedding(double t, std::size_t dim);

}  // namespace gramsr
