#include "gramsr/guidance.hpp"

#include <cmath>
#include <cstdio>

#include "gramsr/error.hpp"
#include "gramsr/exact_sum.hpp"
#include "gramsr/losses.hpp"

namespace gramsr {

void GuidanceScales::validate() const {
  for (double l : {lambda_pix, lambda_sem, lambda_gram})
    if (!std::isfinite(l)) throw ConfigError("guidance scales must be finite");
}

std::string to_string(GuidanceMode mode) { return mode == GuidanceMode::literal ? "literal" : "residual"; }

GuidanceMode guidance_mode_from_string(const std::string& s) {
  if (s == "literal") return GuidanceMode::literal;
  if (s == "residual") return GuidanceMode::residual;
  throw ConfigError("unknown guidance mode: " + s);
}

ForwardPasses forward_passes(const DenoiserParams& params, const LatentTensor& z, const ConditioningTokens& cond) {
  return {predict(params, z, cond, LoRAActivation::prefix(0)), predict(params, z, cond, LoRAActivation::prefix(1)),
          predict(params, z, cond, LoRAActivation::prefix(2)), predict(params, z, cond, LoRAActivation::prefix(3))};
}

namespace {

DeltaTensor exact_difference(const LatentTensor& a, const LatentTensor& b) {
  DeltaTensor d{LatentTensor(a.height, a.width, a.channels), LatentTensor(a.height, a.width, a.channels)};
  for (std::size_t i = 0; i < a.size(); ++i) {
    // TwoSum of a and -b.
    const double x = a.data[i], y = -b.data[i];
    const double s = x + y;
    const double bv = s - x;
    d.value.data[i] = s;
    d.residue.data[i] = (x - (s - bv)) + (y - bv);
  }
  return d;
}

DeltaTensor exact_copy(const LatentTensor& a) {
  return {a, LatentTensor(a.height, a.width, a.channels)};
}

}  // namespace

GuidanceDeltas deltas_from_passes(const ForwardPasses& p, GuidanceMode mode) {
  GuidanceDeltas d;
  d.pix = mode == GuidanceMode::literal ? exact_copy(p.eps_pix) : exact_difference(p.eps_pix, p.eps0);
  d.sem = exact_difference(p.eps_sem, p.eps_pix);
  d.gram = exact_difference(p.eps_gram, p.eps_sem);
  return d;
}

GuidanceDeltas compute_deltas(const LatentTensor& z, const ConditioningTokens& cond, const Checkpoint& ckpt,
                              GuidanceMode mode) {
  if (ckpt.stage != 3)
    throw ConfigError("guidance needs a stage-3 checkpoint, got stage " + std::to_string(ckpt.stage));
  return deltas_from_passes(forward_passes(ckpt.model, z, cond), mode);
}

LatentTensor compose_epsilon(const LatentTensor& eps0, const GuidanceDeltas& d, const GuidanceScales& s) {
  s.validate();
  for (const auto* t : {&d.pix, &d.sem, &d.gram})
    if (!t->value.same_shape(eps0) || !t->residue.same_shape(eps0))
      throw ShapeError("compose_epsilon: delta shape mismatch");
  const double coeff[7] = {1.0, s.lambda_pix, s.lambda_pix, s.lambda_sem, s.lambda_sem, s.lambda_gram, s.lambda_gram};
  LatentTensor out(eps0.height, eps0.width, eps0.channels);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v[7] = {eps0.data[i],       d.pix.value.data[i],  d.pix.residue.data[i], d.sem.value.data[i],
                         d.sem.residue.data[i], d.gram.value.data[i], d.gram.residue.data[i]};
    out.data[i] = exact_dot(coeff, v);
  }
  return out;
}

LatentTensor scaled_delta(const DeltaTensor& delta, double lambda) {
  LatentTensor out(delta.value.height, delta.value.width, delta.value.channels);
  const double coeff[2] = {lambda, lambda};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v[2] = {delta.value.data[i], delta.residue.data[i]};
    out.data[i] = exact_dot(coeff, v);
  }
  return out;
}

GuidedModel::GuidedModel(Checkpoint ckpt) : ckpt_(std::move(ckpt)), frozen_(ckpt_.config) {}

Image GuidedModel::infer(const Image& lq, const GuidanceScales& scales, GuidanceMode mode) const {
  scales.validate();
  const PreparedInput in = frozen_.prepare(lq);
  const ConditioningTokens cond = tokens_for(ckpt_.model, in);
  if (ckpt_.stage != 3)
    throw ConfigError("guidance needs a stage-3 checkpoint, got stage " + std::to_string(ckpt_.stage));
  const ForwardPasses passes = forward_passes(ckpt_.model, in.z_lq, cond);
  const GuidanceDeltas d = deltas_from_passes(passes, mode);
  return restore_from_epsilon(frozen_.codec(), in.z_lq, compose_epsilon(passes.eps0, d, scales));
}

Image GuidedModel::infer_trained(const Image& lq) const {
  const PreparedInput in = frozen_.prepare(lq);
  const ConditioningTokens cond = tokens_for(ckpt_.model, in);
  const LatentTensor eps = predict(ckpt_.model, in.z_lq, cond, LoRAActivation::prefix(ckpt_.stage));
  return restore_from_epsilon(frozen_.codec(), in.z_lq, eps);
}

Image infer(const Image& lq, const GuidanceScales& scales, GuidanceMode mode, const Checkpoint& ckpt) {
  return GuidedModel(ckpt).infer(lq, scales, mode);
}

MetricReport evaluate_restoration(const Image& sr, const Image& reference, const FrozenParts& frozen,
                                  const RunConfig& cfg) {
  MetricReport r = fidelity_report(sr, reference);
  r.auxiliary["gram_distance"] = gram_loss(sr, reference, frozen.gram_encoder(), cfg.gram_norm);
  r.auxiliary["perceptual"] = perceptual_loss(sr, reference, frozen.conditioning_encoder(), cfg.perceptual_layers);
  return r;
}

std::vector<GuidanceScales> gram_sweep_grid(const std::vector<double>& lambda_gram) {
  std::vector<GuidanceScales> grid;
  for (double l : lambda_gram) grid.push_back({1.0, 1.0, l});
  return grid;
}

SweepReport sweep(const GuidedModel& model, const Image& lq, const std::vector<GuidanceScales>& grid,
                  GuidanceMode mode, const std::optional<Image>& gt) {
  if (grid.empty()) throw ConfigError("sweep: empty grid");
  const RunConfig& cfg = model.checkpoint().config;
  const Image reference = gt ? *gt : upsample_bicubic(lq, model.frozen().scale());
  SweepReport report;
  for (const auto& s : grid) {
    const Image sr = model.infer(lq, s, mode);
    if (!sr.same_shape(reference)) throw ShapeError("sweep: reference shape differs from the restoration");
    SweepRow row{s, {}, gt.has_value()};
    if (gt) {
      row.metrics = evaluate_restoration(sr, reference, model.frozen(), cfg);
    } else {
      row.metrics.psnr = std::nan("");
      row.metrics.ssim = std::nan("");
      row.metrics.auxiliary["gram_distance"] = gram_loss(sr, reference, model.frozen().gram_encoder(), cfg.gram_norm);
      row.metrics.auxiliary["perceptual"] =
          perceptual_loss(sr, reference, model.frozen().conditioning_encoder(), cfg.perceptual_layers);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::string SweepReport::to_csv() const {
  std::string out = "lambda_pix,lambda_sem,lambda_gram,psnr,ssim,gram_distance,perceptual\n";
  for (const auto& r : rows) {
    out += num(r.scales.lambda_pix) + "," + num(r.scales.lambda_sem) + "," + num(r.scales.lambda_gram) + ",";
    out += (r.has_reference_metrics ? num(r.metrics.psnr) : "") + ",";
    out += (r.has_reference_metrics ? num(r.metrics.ssim) : "") + ",";
    out += num(r.metrics.auxiliary.at("gram_distance")) + "," + num(r.metrics.auxiliary.at("perceptual")) + "\n";
  }
  return out;
}

}  // namespace gramsr
