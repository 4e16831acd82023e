#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <vector>

#include "gramsr/checkpoint.hpp"
#include "gramsr/config.hpp"
#include "gramsr/guidance.hpp"
#include "gramsr/metrics.hpp"
#include "gramsr/model.hpp"

namespace gramsr {

// One LQ/HQ pair with the frozen-side preprocessing cached.
struct TrainingSample {
  Image lq;
  Image hq;
  PreparedInput input;
};

using Dataset = std::vector<TrainingSample>;

// Degrades each HQ patch with a per-index seed derived from `seed`.
Dataset build_dataset(const std::vector<Image>& hq, const RunConfig& cfg, const FrozenParts& frozen,
                      std::uint64_t seed);
Dataset training_set(const RunConfig& cfg, const FrozenParts& frozen);
Dataset validation_set(const RunConfig& cfg, const FrozenParts& frozen);

struct StageLog {
  std::vector<double> losses;  // per optimizer step, batch mean
  std::size_t steps_run = 0;
  bool early_stopped = false;
};

struct TrainHooks {
  std::ostream* log = nullptr;
  StageLog* stats = nullptr;
};

// Noise-prediction training of the base on HQ latents. The result has the base
// frozen and zero-B pix/sem/gram sets injected.
Checkpoint pretrain_base(const RunConfig& cfg, const Dataset& train, TrainHooks hooks = {});
Checkpoint pretrain_base(const RunConfig& cfg, TrainHooks hooks = {});

// Requires ckpt.stage == stage - 1 and a config describing the same model.
Checkpoint train_stage(int stage, const Checkpoint& ckpt, const RunConfig& cfg, const Dataset& train,
                       const Dataset& val, TrainHooks hooks = {});
Checkpoint train_stage(int stage, const Checkpoint& ckpt, const RunConfig& cfg, TrainHooks hooks = {});

// Stage 0 through 3.
Checkpoint run_pipeline(const RunConfig& cfg, TrainHooks hooks = {});

using Restorer = std::function<Image(const TrainingSample&)>;

// Averages evaluate_restoration over the set. Throws DataError when empty.
MetricReport validate_with(const Restorer& restore, const Dataset& val, const FrozenParts& frozen,
                           const RunConfig& cfg);

// Stage-3 checkpoints run triple guidance at `scales`; earlier stages run the
// model with every trained set active (scales do not apply).
MetricReport validate(const Checkpoint& ckpt, const Dataset& val, const GuidanceScales& scales = {},
                      GuidanceMode mode = GuidanceMode::residual);

}  // namespace gramsr
