#include "gramsr/config.hpp"

#include <cmath>
#include <fstream>

#include "gramsr/error.hpp"

namespace gramsr {

using nlohmann::json;

void RunConfig::finalize() {
  degradation.validate();
  loss_weights.validate();
  validate_encoder_pair(conditioning_encoder, gram_encoder);
  const std::size_t f = degradation.downscale_factor;
  if (patch_size == 0 || patch_size % f) throw ConfigError("patch_size must be divisible by the downscale factor");
  if (codec_stride == 0 || patch_size % (codec_stride * 4))
    throw ConfigError("patch_size must be divisible by 4 * codec_stride");
  for (const auto* e : {&conditioning_encoder, &gram_encoder})
    if (patch_size % e->patch_size) throw ConfigError("patch_size must be divisible by encoder patch sizes");
  if (perceptual_layers.empty()) throw ConfigError("perceptual_layers must not be empty");
  for (auto l : perceptual_layers)
    if (l >= conditioning_encoder.depth) throw ConfigError("perceptual layer index exceeds encoder depth");
  if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  for (double lr : learning_rate)
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be positive");
  if (!(cond_dropout >= 0.0 && cond_dropout <= 1.0)) throw ConfigError("cond_dropout must lie in [0,1]");
  if (synthetic_train_count == 0 && train_dir.empty()) throw ConfigError("empty training corpus");
  denoiser.latent_channels = conditioning_encoder.in_channels * codec_stride * codec_stride;
  const std::size_t grid = patch_size / conditioning_encoder.patch_size;
  denoiser.cond_tokens = grid * grid;
  (void)schedule();
}

DenoiserArch RunConfig::denoiser_arch() const { return denoiser; }

NoiseSchedule RunConfig::schedule() const { return NoiseSchedule::linear(schedule_steps, beta_start, beta_end); }

json to_json(const EncoderSpec& s) {
  return json{{"role", to_string(s.role)}, {"patch_size", s.patch_size}, {"depth", s.depth}, {"dim", s.dim},
              {"seed", s.seed},          {"frozen", s.frozen},         {"in_channels", s.in_channels}};
}

EncoderSpec encoder_spec_from_json(const json& j) {
  EncoderSpec s;
  s.role = encoder_role_from_string(j.at("role").get<std::string>());
  s.patch_size = j.at("patch_size").get<std::size_t>();
  s.depth = j.at("depth").get<std::size_t>();
  s.dim = j.at("dim").get<std::size_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.frozen = j.value("frozen", true);
  s.in_channels = j.value("in_channels", std::size_t{3});
  return s;
}

json to_json(const RunConfig& c) {
  const auto& d = c.degradation;
  const auto& a = c.denoiser;
  return json{
      {"data",
       {{"train_dir", c.train_dir},
        {"val_dir", c.val_dir},
        {"synthetic_train_count", c.synthetic_train_count},
        {"synthetic_val_count", c.synthetic_val_count},
        {"patches_per_image", c.patches_per_image}}},
      {"patch_size", c.patch_size},
      {"degradation",
       {{"blur_sigma_range", {d.blur_sigma.lo, d.blur_sigma.hi}},
        {"noise_sigma_range", {d.noise_sigma.lo, d.noise_sigma.hi}},
        {"downscale_factor", d.downscale_factor},
        {"compression_quality_range", {d.quality.lo, d.quality.hi}},
        {"stage_order", {"blur", "resize", "noise", "compression"}}}},
      {"codec_stride", c.codec_stride},
      {"encoders", {{"conditioning", to_json(c.conditioning_encoder)}, {"gram", to_json(c.gram_encoder)}}},
      {"gram_norm", to_string(c.gram_norm)},
      {"perceptual_layers", c.perceptual_layers},
      {"denoiser",
       {{"base_width", a.base_width},
        {"cond_dim", a.cond_dim},
        {"attn_dim", a.attn_dim},
        {"time_dim", a.time_dim},
        {"sr_timestep", a.sr_timestep},
        {"conditioning_mode", to_string(a.conditioning)}}},
      {"lora_rank", c.lora_rank},
      {"loss_weights",
       {{"lambda1", c.loss_weights.lambda1},
        {"lambda2", c.loss_weights.lambda2},
        {"lambda3", c.loss_weights.lambda3},
        {"lambda4", c.loss_weights.lambda4}}},
      {"schedule", {{"steps", c.schedule_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
      {"cond_dropout", c.cond_dropout},
      {"learning_rates", c.learning_rate},
      {"max_steps", c.max_steps},
      {"batch_size", c.batch_size},
      {"early_stop", {{"eval_every", c.eval_every}, {"patience", c.patience}}},
      {"seeds", {{"init", c.seeds.init}, {"data", c.seeds.data}, {"train", c.seeds.train}}},
  };
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      read(d, "train_dir", c.train_dir);
      read(d, "val_dir", c.val_dir);
      read(d, "synthetic_train_count", c.synthetic_train_count);
      read(d, "synthetic_val_count", c.synthetic_val_count);
      read(d, "patches_per_image", c.patches_per_image);
    }
    read(j, "patch_size", c.patch_size);
    if (j.contains("degradation")) {
      const auto& d = j.at("degradation");
      if (d.contains("blur_sigma_range")) {
        c.degradation.blur_sigma.lo = d.at("blur_sigma_range").at(0).get<double>();
        c.degradation.blur_sigma.hi = d.at("blur_sigma_range").at(1).get<double>();
      }
      if (d.contains("noise_sigma_range")) {
        c.degradation.noise_sigma.lo = d.at("noise_sigma_range").at(0).get<double>();
        c.degradation.noise_sigma.hi = d.at("noise_sigma_range").at(1).get<double>();
      }
      if (d.contains("compression_quality_range")) {
        c.degradation.quality.lo = d.at("compression_quality_range").at(0).get<int>();
        c.degradation.quality.hi = d.at("compression_quality_range").at(1).get<int>();
      }
      read(d, "downscale_factor", c.degradation.downscale_factor);
      if (d.contains("stage_order") &&
          d.at("stage_order") != json::array({"blur", "resize", "noise", "compression"}))
        throw ConfigError("degradation stage_order is fixed: blur, resize, noise, compression");
    }
    read(j, "codec_stride", c.codec_stride);
    if (j.contains("encoders")) {
      const auto& e = j.at("encoders");
      if (e.contains("conditioning")) c.conditioning_encoder = encoder_spec_from_json(e.at("conditioning"));
      if (e.contains("gram")) c.gram_encoder = encoder_spec_from_json(e.at("gram"));
    }
    if (j.contains("gram_norm")) c.gram_norm = gram_norm_from_string(j.at("gram_norm").get<std::string>());
    read(j, "perceptual_layers", c.perceptual_layers);
    if (j.contains("denoiser")) {
      const auto& d = j.at("denoiser");
      read(d, "base_width", c.denoiser.base_width);
      read(d, "cond_dim", c.denoiser.cond_dim);
      read(d, "attn_dim", c.denoiser.attn_dim);
      read(d, "time_dim", c.denoiser.time_dim);
      read(d, "sr_timestep", c.denoiser.sr_timestep);
      if (d.contains("conditioning_mode"))
        c.denoiser.conditioning = conditioning_mode_from_string(d.at("conditioning_mode").get<std::string>());
    }
    read(j, "lora_rank", c.lora_rank);
    if (j.contains("loss_weights")) {
      const auto& w = j.at("loss_weights");
      read(w, "lambda1", c.loss_weights.lambda1);
      read(w, "lambda2", c.loss_weights.lambda2);
      read(w, "lambda3", c.loss_weights.lambda3);
      read(w, "lambda4", c.loss_weights.lambda4);
    }
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      read(s, "steps", c.schedule_steps);
      read(s, "beta_start", c.beta_start);
      read(s, "beta_end", c.beta_end);
    }
    read(j, "cond_dropout", c.cond_dropout);
    read(j, "learning_rates", c.learning_rate);
    read(j, "max_steps", c.max_steps);
    read(j, "batch_size", c.batch_size);
    if (j.contains("early_stop")) {
      read(j.at("early_stop"), "eval_every", c.eval_every);
      read(j.at("early_stop"), "patience", c.patience);
    }
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      read(s, "init", c.seeds.init);
      read(s, "data", c.seeds.data);
      read(s, "train", c.seeds.train);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.finalize();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("run config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_json(cfg).dump(2) << "\n";
}

}  // namespace gramsr
