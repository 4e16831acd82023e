#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gramsr/checkpoint.hpp"
#include "gramsr/codec.hpp"
#include "gramsr/metrics.hpp"
#include "gramsr/model.hpp"

namespace gramsr {

struct GuidanceScales {
  double lambda_pix = 1.0;
  double lambda_sem = 1.0;
  double lambda_gram = 1.0;

  void validate() const;
  friend bool operator==(const GuidanceScales&, const GuidanceScales&) = default;
};

// literal: delta_pix = eps_pix. residual: delta_pix = eps_pix - eps_0, so unit
// scales telescope to the all-active prediction.
enum class GuidanceMode { literal, residual };

std::string to_string(GuidanceMode mode);
GuidanceMode guidance_mode_from_string(const std::string& s);

// Predictions under the activations {}, {pix}, {pix,sem}, {pix,sem,gram}.
struct ForwardPasses {
  LatentTensor eps0, eps_pix, eps_sem, eps_gram;
};

// An exact difference a - b held as value + residue (value is the rounded
// difference, residue its rounding error).
struct DeltaTensor {
  LatentTensor value;
  LatentTensor residue;
};

struct GuidanceDeltas {
  DeltaTensor pix, sem, gram;
};

ForwardPasses forward_passes(const DenoiserParams& params, const LatentTensor& z, const ConditioningTokens& cond);

GuidanceDeltas deltas_from_passes(const ForwardPasses& passes, GuidanceMode mode);

// Requires a stage-3 checkpoint (ConfigError otherwise).
GuidanceDeltas compute_deltas(const LatentTensor& z, const ConditioningTokens& cond, const Checkpoint& ckpt,
                              GuidanceMode mode);

// eps_0 + lp*d_pix + ls*d_sem + lg*d_gram, each element correctly rounded
// from the exact real value.
LatentTensor compose_epsilon(const LatentTensor& eps0, const GuidanceDeltas& deltas, const GuidanceScales& scales);

// lambda * delta, correctly rounded.
LatentTensor scaled_delta(const DeltaTensor& delta, double lambda);

// Inference over an immutable checkpoint snapshot; safe to share between
// threads.
class GuidedModel {
 public:
  explicit GuidedModel(Checkpoint ckpt);

  const Checkpoint& checkpoint() const { return ckpt_; }
  const FrozenParts& frozen() const { return frozen_; }

  // Triple guidance; stage-3 checkpoints only.
  Image infer(const Image& lq, const GuidanceScales& scales, GuidanceMode mode) const;
  // Every set trained so far active, no guidance arithmetic.
  Image infer_trained(const Image& lq) const;

 private:
  Checkpoint ckpt_;
  FrozenParts frozen_;
};

Image infer(const Image& lq, const GuidanceScales& scales, GuidanceMode mode, const Checkpoint& ckpt);

// PSNR / SSIM on luminance plus gram_distance and perceptual in auxiliary.
MetricReport evaluate_restoration(const Image& sr, const Image& reference, const FrozenParts& frozen,
                                  const RunConfig& cfg);

struct SweepRow {
  GuidanceScales scales;
  MetricReport metrics;
  bool has_reference_metrics = false;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  std::string to_csv() const;
};

// lambda_gram sweep with lambda_pix = lambda_sem = 1.
std::vector<GuidanceScales> gram_sweep_grid(const std::vector<double>& lambda_gram = {0.25, 0.5, 0.75, 1.0});

// Without gt, psnr/ssim are left blank and gram_distance / perceptual are
// measured against the bicubic upsample of x_L.
SweepReport sweep(const GuidedModel& model, const Image& lq, const std::vector<GuidanceScales>& grid,
                  GuidanceMode mode, const std::optional<Image>& gt = std::nullopt);

}  // namespace gramsr
