#include "gramsr/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "gramsr/error.hpp"

namespace gramsr {

std::string to_string(ConditioningMode mode) {
  switch (mode) {
    case ConditioningMode::visual: return "visual";
    case ConditioningMode::fixed_tensor: return "fixed_tensor";
    case ConditioningMode::learnable_tensor: return "learnable_tensor";
  }
  return "visual";
}

ConditioningMode conditioning_mode_from_string(const std::string& s) {
  if (s == "visual") return ConditioningMode::visual;
  if (s == "fixed_tensor") return ConditioningMode::fixed_tensor;
  if (s == "learnable_tensor") return ConditioningMode::learnable_tensor;
  throw ConfigError("unknown conditioning mode: " + s);
}

LoRAActivation LoRAActivation::prefix(int level) {
  if (level < 0 || level > 3) throw ConfigError("activation prefix level must be in [0,3]");
  return {level >= 1, level >= 2, level >= 3};
}

bool LoRAActivation::is_active(const std::string& set_name) const {
  if (set_name == "pix") return pix;
  if (set_name == "sem") return sem;
  if (set_name == "gram") return gram;
  throw ConfigError("unknown LoRA activation name: " + set_name);
}

const LoRAParamSet* DenoiserParams::find_set(const std::string& name) const {
  for (const auto& s : lora_sets)
    if (s.name == name) return &s;
  return nullptr;
}

std::vector<LayerSpec> layer_registry(const DenoiserArch& a) {
  const std::size_t w = a.base_width;
  return {
      {"conv_in", LayerKind::conv3x3, 9 * a.latent_channels, w},
      {"enc2", LayerKind::conv3x3, 9 * w, 2 * w},
      {"mid", LayerKind::conv3x3, 9 * 2 * w, 2 * w},
      {"mlp.fc1", LayerKind::linear, 2 * w, 4 * w},
      {"mlp.fc2", LayerKind::linear, 4 * w, 2 * w},
      {"up2", LayerKind::conv3x3, 9 * 4 * w, 2 * w},
      {"up1", LayerKind::conv3x3, 9 * 3 * w, w},
      {"conv_out", LayerKind::conv3x3, 9 * w, a.latent_channels},
  };
}

namespace {

void add_weight(ParamStore& store, Rng& rng, const std::string& name, std::size_t rows, std::size_t cols,
                double gain) {
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(cols));
  store.add(name, {rows, cols}, uniform_init(rng, rows * cols, bound), group::kBase);
}

void add_bias_param(ParamStore& store, const std::string& name, std::size_t n) {
  store.add(name, {n}, std::vector<double>(n, 0.0), group::kBase);
}

}  // namespace

DenoiserParams make_denoiser(const DenoiserArch& arch, std::uint64_t seed) {
  if (arch.latent_channels == 0 || arch.base_width == 0 || arch.cond_dim == 0 || arch.attn_dim == 0 ||
      arch.time_dim < 2)
    throw ConfigError("denoiser: architecture widths must be positive");
  DenoiserParams p;
  p.arch = arch;
  Rng rng(seed);
  for (const auto& layer : layer_registry(arch)) {
    // Output conv starts small so the untrained backbone predicts little.
    const double gain = layer.name == "conv_out" ? 0.1 : std::sqrt(2.0);
    add_weight(p.store, rng, "base." + layer.name + ".w", layer.out, layer.in, gain);
    add_bias_param(p.store, "base." + layer.name + ".b", layer.out);
  }
  const std::size_t w = arch.base_width;
  add_weight(p.store, rng, "base.time_in.w", w, arch.time_dim, 1.0);
  add_bias_param(p.store, "base.time_in.b", w);
  add_weight(p.store, rng, "base.time_mid.w", 2 * w, arch.time_dim, 1.0);
  add_bias_param(p.store, "base.time_mid.b", 2 * w);
  add_weight(p.store, rng, "base.attn.wq", arch.attn_dim, 2 * w, 1.0);
  add_weight(p.store, rng, "base.attn.wk", arch.attn_dim, arch.cond_dim, 1.0);
  add_weight(p.store, rng, "base.attn.wv", arch.attn_dim, arch.cond_dim, 1.0);
  add_weight(p.store, rng, "base.attn.wo", 2 * w, arch.attn_dim, 0.5);
  if (arch.conditioning == ConditioningMode::learnable_tensor)
    p.store.add("cond_tensor", {arch.cond_tokens, arch.cond_dim},
                std::vector<double>(arch.cond_tokens * arch.cond_dim, 0.0), group::kCondTensor);
  return p;
}

const LoRAParamSet& inject_lora(DenoiserParams& params, const std::string& name, std::size_t rank,
                                std::vector<std::string> targets, std::uint64_t seed) {
  if (name != "pix" && name != "sem" && name != "gram")
    throw ConfigError("LoRA set name must be one of pix, sem, gram: " + name);
  if (params.find_set(name)) throw ConfigError("LoRA set already injected: " + name);
  if (rank < 1) throw ConfigError("LoRA rank must be >= 1");
  const auto registry = layer_registry(params.arch);
  if (targets.empty())
    for (const auto& l : registry) targets.push_back(l.name);
  Rng rng(seed);
  LoRAParamSet set{name, rank, 1.0 / static_cast<double>(rank), targets, false};
  for (const auto& t : targets) {
    auto it = std::find_if(registry.begin(), registry.end(), [&](const LayerSpec& l) { return l.name == t; });
    if (it == registry.end()) throw ConfigError("unknown LoRA target layer: " + t);
  }
  for (const auto& t : targets) {
    const auto& layer = *std::find_if(registry.begin(), registry.end(),
                                      [&](const LayerSpec& l) { return l.name == t; });
    const std::string prefix = set.group() + "." + t;
    params.store.add(prefix + ".A", {rank, layer.in},
                     uniform_init(rng, rank * layer.in, 1.0 / std::sqrt(static_cast<double>(layer.in))),
                     set.group());
    params.store.add(prefix + ".B", {layer.out, rank}, std::vector<double>(layer.out * rank, 0.0),
                     set.group());
  }
  params.lora_sets.push_back(std::move(set));
  return params.lora_sets.back();
}

void set_stage_trainability(int stage, DenoiserParams& params) {
  if (stage < 0 || stage > 3) throw ConfigError("unknown training stage " + std::to_string(stage));
  if (stage == 0 && params.base_frozen) throw ConfigError("base parameters are frozen");
  if (stage >= 1)
    for (const char* n : kLoraNames)
      if (!params.find_set(n)) throw ConfigError(std::string("LoRA set not injected: ") + n);

  const char* conditioning = params.arch.conditioning == ConditioningMode::learnable_tensor
                                 ? group::kCondTensor
                                 : group::kAdapter;
  std::set<std::string> groups;
  switch (stage) {
    case 0: groups = {group::kBase}; break;
    case 1: groups = {group::kLoraPix, conditioning}; break;
    case 2: groups = {group::kLoraSem, conditioning}; break;
    case 3: groups = {group::kLoraGram}; break;
  }
  // Fixed conditioning has nothing to learn.
  if (params.arch.conditioning == ConditioningMode::fixed_tensor) groups.erase(group::kAdapter);
  params.store.set_trainable_groups(groups);
  for (auto& s : params.lora_sets) s.trainable = groups.contains(s.group());
}

ad::Var conditioning_tokens(const DenoiserParams& params, ParamBinder& binder, const ad::Var& features) {
  switch (params.arch.conditioning) {
    case ConditioningMode::visual: return adapt(features, binder);
    case ConditioningMode::fixed_tensor: return null_conditioning(params, params.arch.cond_tokens);
    case ConditioningMode::learnable_tensor: return binder.get("cond_tensor");
  }
  return null_conditioning(params, params.arch.cond_tokens);
}

ad::Var null_conditioning(const DenoiserParams& params, std::size_t rows) {
  return ad::Var::zeros({rows, params.arch.cond_dim});
}

ad::Var effective_weight(const DenoiserParams& params, ParamBinder& binder, const std::string& layer,
                         const LoRAActivation& act) {
  ad::Var w = binder.get("base." + layer + ".w");
  for (const auto& set : params.lora_sets) {
    if (!act.is_active(set.name)) continue;
    if (std::find(set.targets.begin(), set.targets.end(), layer) == set.targets.end()) continue;
    const std::string prefix = set.group() + "." + layer;
    const ad::Var delta = ad::matmul(binder.get(prefix + ".B"), binder.get(prefix + ".A"));
    w = ad::add(w, ad::scale(delta, set.scaling));
  }
  return w;
}

ad::Var apply_layer(const DenoiserParams& params, ParamBinder& binder, const LayerSpec& layer,
                    const ad::Var& x, const LoRAActivation& act) {
  const ad::Var w = effective_weight(params, binder, layer.name, act);
  const ad::Var b = binder.get("base." + layer.name + ".b");
  if (layer.kind == LayerKind::conv3x3) return ad::conv3x3(x, w, b);
  return ad::add_bias(ad::matmul_nt(x, w), b);
}

std::vector<double> timestep_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> e(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return e;
}

ad::Var denoiser_forward(const DenoiserParams& params, ParamBinder& binder, const ad::Var& z,
                         const ad::Var& cond, const LoRAActivation& act, double timestep) {
  using namespace ad;
  const auto& a = params.arch;
  if (z.shape().size() != 3 || z.dim(2) != a.latent_channels || z.dim(0) % 4 || z.dim(1) % 4 ||
      z.dim(0) == 0 || z.dim(1) == 0)
    throw ShapeError("denoiser: latent " + shape_str(z.shape()) + " incompatible with " +
                     std::to_string(a.latent_channels) + " channels and two 2x poolings");
  if (cond.shape().size() != 2 || cond.dim(1) != a.cond_dim || cond.dim(0) == 0)
    throw ShapeError("denoiser: conditioning " + shape_str(cond.shape()) + " expects width " +
                     std::to_string(a.cond_dim));
  for (const auto& s : params.lora_sets) (void)act.is_active(s.name);

  const auto registry = layer_registry(a);
  auto layer = [&](const char* name) -> const LayerSpec& {
    return *std::find_if(registry.begin(), registry.end(), [&](const LayerSpec& l) { return l.name == name; });
  };
  const std::size_t w = a.base_width;

  const Var temb = Var::constant({1, a.time_dim}, timestep_embedding(timestep, a.time_dim));
  const Var t_in = reshape(add_bias(matmul_nt(temb, binder.get("base.time_in.w")), binder.get("base.time_in.b")), {w});
  const Var t_mid =
      reshape(add_bias(matmul_nt(temb, binder.get("base.time_mid.w")), binder.get("base.time_mid.b")), {2 * w});

  const Var h1 = silu(add_bias(apply_layer(params, binder, layer("conv_in"), z, act), t_in));
  const Var h2 = silu(apply_layer(params, binder, layer("enc2"), avg_pool2(h1), act));
  Var h3 = silu(add_bias(apply_layer(params, binder, layer("mid"), avg_pool2(h2), act), t_mid));

  const std::size_t bh = h3.dim(0), bw = h3.dim(1);
  Var tokens = reshape(h3, {bh * bw, 2 * w});
  {
    const Var q = matmul_nt(tokens, binder.get("base.attn.wq"));
    const Var k = matmul_nt(cond, binder.get("base.attn.wk"));
    const Var v = matmul_nt(cond, binder.get("base.attn.wv"));
    const Var attn = softmax_rows(scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(a.attn_dim))));
    tokens = add(tokens, matmul_nt(matmul(attn, v), binder.get("base.attn.wo")));
  }
  {
    const Var m = silu(apply_layer(params, binder, layer("mlp.fc1"), tokens, act));
    tokens = add(tokens, apply_layer(params, binder, layer("mlp.fc2"), m, act));
  }
  h3 = reshape(tokens, {bh, bw, 2 * w});

  const Var u2 = silu(apply_layer(params, binder, layer("up2"), concat_last(upsample_nearest2(h3), h2), act));
  const Var u1 = silu(apply_layer(params, binder, layer("up1"), concat_last(upsample_nearest2(u2), h1), act));
  return apply_layer(params, binder, layer("conv_out"), u1, act);
}

LatentTensor predict(const DenoiserParams& params, const LatentTensor& z, const ConditioningTokens& cond,
                     const LoRAActivation& act) {
  ParamBinder binder(params.store, false);
  ad::Var tokens;
  switch (params.arch.conditioning) {
    case ConditioningMode::visual: tokens = cond.to_var(); break;
    case ConditioningMode::fixed_tensor: tokens = null_conditioning(params, params.arch.cond_tokens); break;
    case ConditioningMode::learnable_tensor: tokens = binder.get("cond_tensor"); break;
  }
  return LatentTensor::from_var(
      denoiser_forward(params, binder, z.to_var(), tokens, act, params.arch.sr_timestep));
}

}  // namespace gramsr
