#include "gramsr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "gramsr/corpus.hpp"
#include "gramsr/degrade.hpp"
#include "gramsr/error.hpp"
#include "gramsr/losses.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

Dataset build_dataset(const std::vector<Image>& hq, const RunConfig& cfg, const FrozenParts& frozen,
                      std::uint64_t seed) {
  Dataset out;
  out.reserve(hq.size());
  Rng seeds(seed);
  for (const auto& img : hq) {
    const std::uint64_t s = seeds.next_u64();
    TrainingSample sample;
    sample.hq = img;
    sample.lq = degrade(img, cfg.degradation, s);
    sample.input = frozen.prepare(sample.lq);
    out.push_back(std::move(sample));
  }
  return out;
}

Dataset training_set(const RunConfig& cfg, const FrozenParts& frozen) {
  return build_dataset(hq_patches(cfg, false), cfg, frozen, cfg.seeds.data);
}

Dataset validation_set(const RunConfig& cfg, const FrozenParts& frozen) {
  return build_dataset(hq_patches(cfg, true), cfg, frozen, cfg.seeds.data + 1);
}

namespace {

// Seeded epoch-shuffled batch stream.
class BatchOrder {
 public:
  BatchOrder(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    pos_ = 0;
  }

  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

void check_same_model(const RunConfig& a, const RunConfig& b) {
  if (!(a.denoiser == b.denoiser) || !(a.conditioning_encoder == b.conditioning_encoder) ||
      !(a.gram_encoder == b.gram_encoder) || a.codec_stride != b.codec_stride || a.patch_size != b.patch_size ||
      a.lora_rank != b.lora_rank || a.degradation.downscale_factor != b.degradation.downscale_factor ||
      a.seeds.init != b.seeds.init)
    throw ConfigError("run config describes a different model than the checkpoint");
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void say(const TrainHooks& hooks, const std::string& msg) {
  if (hooks.log) *hooks.log << msg << std::endl;
}

// Early-stop criterion: gram distance plus perceptual surrogate, each scaled
// by its training weight so neither term is lost to magnitude differences.
ValidationRecord record(std::uint64_t step, const MetricReport& r, const LossWeights& w) {
  const double g = r.auxiliary.at("gram_distance");
  const double p = r.auxiliary.at("perceptual");
  return {step, w.lambda4 * g + w.lambda2 * p, r.psnr, r.ssim, g, p};
}

Restorer trained_restorer(const DenoiserParams& model, const FrozenParts& frozen, int stage) {
  return [&model, &frozen, stage](const TrainingSample& s) {
    const LatentTensor eps =
        predict(model, s.input.z_lq, tokens_for(model, s.input), LoRAActivation::prefix(stage));
    return restore_from_epsilon(frozen.codec(), s.input.z_lq, eps);
  };
}

}  // namespace

Checkpoint pretrain_base(const RunConfig& cfg, const Dataset& train, TrainHooks hooks) {
  if (train.empty()) throw DataError("pretrain: empty training corpus");
  const FrozenParts frozen(cfg);
  const NoiseSchedule schedule = cfg.schedule();
  Checkpoint ck;
  ck.stage = 0;
  ck.config = cfg;
  ck.model = build_model(cfg);
  set_stage_trainability(0, ck.model);

  std::vector<LatentTensor> targets;
  for (const auto& s : train) targets.push_back(frozen.codec().encode(s.hq));

  Adam adam(cfg.learning_rate[0]);
  BatchOrder order(train.size(), cfg.seeds.train);
  Rng rng(cfg.seeds.train ^ 0x5DEECE66DULL);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  for (std::size_t step = 0; step < cfg.max_steps[0]; ++step) {
    GradMap grads;
    double total = 0.0;
    for (std::size_t idx : order.next(cfg.batch_size)) {
      const LatentTensor& z0 = targets[idx];
      const std::size_t t = rng.below(schedule.steps);
      const double a = std::sqrt(schedule.alpha_bar[t]);
      const double sd = std::sqrt(1.0 - schedule.alpha_bar[t]);
      LatentTensor noise(z0.height, z0.width, z0.channels);
      LatentTensor zt(z0.height, z0.width, z0.channels);
      for (std::size_t i = 0; i < z0.size(); ++i) {
        noise.data[i] = rng.normal();
        zt.data[i] = a * z0.data[i] + sd * noise.data[i];
      }
      const bool drop = rng.uniform() < cfg.cond_dropout;

      ParamBinder binder(ck.model.store, true);
      const ad::Var tokens = drop ? null_conditioning(ck.model, cfg.denoiser.cond_tokens)
                                  : conditioning_tokens(ck.model, binder, train[idx].input.features.to_var());
      const ad::Var pred = denoiser_forward(ck.model, binder, zt.to_var(), tokens, LoRAActivation::none(),
                                            static_cast<double>(t));
      const ad::Var loss = ad::mse(pred, noise.to_var());
      total += loss.item();
      ad::backward(ad::scale(loss, inv_batch));
      binder.accumulate_grads(grads);
    }
    adam.step(ck.model.store, grads);
    const double mean_loss = total * inv_batch;
    if (hooks.stats) hooks.stats->losses.push_back(mean_loss);
    if (hooks.log && (step + 1) % 50 == 0)
      say(hooks, "stage 0 step " + std::to_string(step + 1) + " loss " + num(mean_loss));
  }
  if (hooks.stats) hooks.stats->steps_run = cfg.max_steps[0];
  ck.step = cfg.max_steps[0];
  ck.model.base_frozen = true;
  inject_all_lora(ck.model, cfg);
  ck.model.store.set_trainable_groups({});
  return ck;
}

Checkpoint pretrain_base(const RunConfig& cfg, TrainHooks hooks) {
  const FrozenParts frozen(cfg);
  return pretrain_base(cfg, training_set(cfg, frozen), hooks);
}

Checkpoint train_stage(int stage, const Checkpoint& ckpt, const RunConfig& cfg, const Dataset& train,
                       const Dataset& val, TrainHooks hooks) {
  if (stage < 1 || stage > 3) throw ConfigError("train_stage: stage must be 1, 2 or 3");
  if (ckpt.stage != stage - 1)
    throw ConfigError("train_stage " + std::to_string(stage) + " needs a stage-" + std::to_string(stage - 1) +
                      " checkpoint, got stage " + std::to_string(ckpt.stage));
  if (!ckpt.model.base_frozen) throw ConfigError("train_stage: base has not been pretrained");
  check_same_model(ckpt.config, cfg);
  if (train.empty()) throw DataError("train_stage: empty training corpus");
  if (stage == 3 && val.empty()) throw DataError("train_stage: stage 3 needs a validation set");

  const FrozenParts frozen(cfg);
  const NoiseSchedule schedule = cfg.schedule();
  Checkpoint ck = ckpt;
  ck.config = cfg;
  set_stage_trainability(stage, ck.model);

  Adam adam(cfg.learning_rate[static_cast<std::size_t>(stage)]);
  BatchOrder order(train.size(), cfg.seeds.train + static_cast<std::uint64_t>(stage));
  Rng csd_seeds(cfg.seeds.train ^ (static_cast<std::uint64_t>(stage) << 40));
  const LoRAActivation act = LoRAActivation::prefix(stage);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  const std::size_t max_steps = cfg.max_steps[static_cast<std::size_t>(stage)];

  // Stage-3 early stopping with best-snapshot retention.
  double best = std::numeric_limits<double>::infinity();
  ParamStore best_store = ck.model.store;
  std::size_t bad_evals = 0;
  bool stopped = false;
  std::size_t step = 0;

  auto evaluate = [&](std::uint64_t at) {
    const MetricReport r = validate_with(trained_restorer(ck.model, frozen, stage), val, frozen, cfg);
    ValidationRecord rec = record(ck.step + at, r, cfg.loss_weights);
    ck.history.push_back(rec);
    say(hooks, "stage " + std::to_string(stage) + " eval step " + std::to_string(at) + " psnr " + num(rec.psnr) +
                   " gram " + num(rec.gram_distance) + " metric " + num(rec.metric));
    return rec.metric;
  };

  while (step < max_steps && !stopped) {
    GradMap grads;
    double total = 0.0;
    for (std::size_t idx : order.next(cfg.batch_size)) {
      const TrainingSample& s = train[idx];
      ParamBinder binder(ck.model.store, true);
      const ad::Var tokens = conditioning_tokens(ck.model, binder, s.input.features.to_var());
      const ad::Var z = s.input.z_lq.to_var();
      const ad::Var eps = denoiser_forward(ck.model, binder, z, tokens, act, cfg.denoiser.sr_timestep);
      const ad::Var zh = ad::sub(z, eps);
      const ad::Var x = frozen.codec().decode(zh);
      const ad::Var hq = image_to_var(s.hq);

      LossTerms terms;
      terms.mse = mse_loss(x, hq);
      if (stage >= 2) {
        terms.perceptual = perceptual_loss(x, hq, frozen.conditioning_encoder(), cfg.perceptual_layers);
        const CsdGradient g =
            csd_loss_gradient(&ck.model, LatentTensor::from_var(zh), tokens, schedule, csd_seeds.next_u64());
        terms.csd = csd_surrogate(zh, g.gradient);
      }
      if (stage == 3) terms.gram = gram_loss(x, hq, frozen.gram_encoder(), cfg.gram_norm);
      const CompositeLoss loss = composite_loss(stage, terms, cfg.loss_weights);
      total += loss.value;
      ad::backward(ad::scale(loss.objective, inv_batch));
      binder.accumulate_grads(grads);
    }
    adam.step(ck.model.store, grads);
    ++step;
    const double mean_loss = total * inv_batch;
    if (hooks.stats) hooks.stats->losses.push_back(mean_loss);
    if (hooks.log && step % 50 == 0)
      say(hooks, "stage " + std::to_string(stage) + " step " + std::to_string(step) + " loss " +
                     num(mean_loss));

    if (stage == 3 && (step % cfg.eval_every == 0 || step == max_steps)) {
      const double metric = evaluate(step);
      if (metric < best) {
        best = metric;
        best_store = ck.model.store;
        bad_evals = 0;
      } else if (++bad_evals >= cfg.patience) {
        stopped = true;
      }
    }
  }

  if (stage == 3) {
    ck.model.store = best_store;
  } else if (!val.empty()) {
    evaluate(step);
  }
  if (hooks.stats) {
    hooks.stats->steps_run = step;
    hooks.stats->early_stopped = stopped;
  }
  ck.step += step;
  ck.stage = stage;
  ck.model.store.set_trainable_groups({});
  for (auto& s : ck.model.lora_sets) s.trainable = false;
  return ck;
}

Checkpoint train_stage(int stage, const Checkpoint& ckpt, const RunConfig& cfg, TrainHooks hooks) {
  const FrozenParts frozen(cfg);
  return train_stage(stage, ckpt, cfg, training_set(cfg, frozen), validation_set(cfg, frozen), hooks);
}

Checkpoint run_pipeline(const RunConfig& cfg, TrainHooks hooks) {
  const FrozenParts frozen(cfg);
  const Dataset train = training_set(cfg, frozen);
  const Dataset val = validation_set(cfg, frozen);
  Checkpoint ck = pretrain_base(cfg, train, hooks);
  for (int stage = 1; stage <= 3; ++stage) ck = train_stage(stage, ck, cfg, train, val, hooks);
  return ck;
}

MetricReport validate_with(const Restorer& restore, const Dataset& val, const FrozenParts& frozen,
                           const RunConfig& cfg) {
  if (val.empty()) throw DataError("validate: empty validation set");
  MetricReport mean;
  for (const auto& s : val) {
    const MetricReport r = evaluate_restoration(restore(s), s.hq, frozen, cfg);
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
    for (const auto& [k, v] : r.auxiliary) mean.auxiliary[k] += v;
  }
  const double n = static_cast<double>(val.size());
  mean.psnr /= n;
  mean.ssim /= n;
  for (auto& [k, v] : mean.auxiliary) v /= n;
  return mean;
}

MetricReport validate(const Checkpoint& ckpt, const Dataset& val, const GuidanceScales& scales, GuidanceMode mode) {
  const GuidedModel model(ckpt);
  if (ckpt.stage == 3)
    return validate_with([&](const TrainingSample& s) { return model.infer(s.lq, scales, mode); }, val,
                         model.frozen(), ckpt.config);
  return validate_with([&](const TrainingSample& s) { return model.infer_trained(s.lq); }, val, model.frozen(),
                       ckpt.config);
}

}  // namespace gramsr
