#include "gramsr/losses.hpp"

#include <cmath>

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

void LossWeights::validate() const {
  for (double w : {lambda1, lambda2, lambda3, lambda4})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and non-negative");
}

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  NoiseSchedule s;
  s.steps = steps;
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double frac = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta.push_back(b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  s.validate();
  return s;
}

void NoiseSchedule::validate() const {
  if (steps == 0 || beta.size() != steps || alpha_bar.size() != steps)
    throw ConfigError("noise schedule: inconsistent step count");
  for (std::size_t t = 0; t < steps; ++t) {
    if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw ConfigError("noise schedule: beta must lie in (0,1)");
    if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1]))
      throw ConfigError("noise schedule: alpha_bar must be strictly decreasing");
  }
}

ad::Var mse_loss(const ad::Var& pred, const ad::Var& target) { return ad::mse(pred, target); }

double mse_loss(const Image& pred, const Image& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
  return ad::mse(image_to_var(pred), image_to_var(target)).item();
}

double mse_loss(const LatentTensor& pred, const LatentTensor& target) {
  if (!pred.same_shape(target)) throw ShapeError("mse_loss: shape mismatch");
  return ad::mse(pred.to_var(), target.to_var()).item();
}

ad::Var perceptual_loss(const ad::Var& pred, const ad::Var& target, const FeatureEncoder& encoder,
                        const std::vector<std::size_t>& layers) {
  if (pred.shape() != target.shape()) throw ShapeError("perceptual_loss: shape mismatch");
  if (layers.empty()) throw ConfigError("perceptual_loss: no encoder layers selected");
  const auto fp = encoder.forward_layers(pred);
  const auto ft = encoder.forward_layers(target);
  std::vector<ad::Var> terms;
  for (auto l : layers) {
    if (l >= fp.size()) throw ConfigError("perceptual_loss: layer index out of range");
    terms.push_back(ad::mse(fp[l], ft[l]));
  }
  return ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(layers.size()));
}

double perceptual_loss(const Image& pred, const Image& target, const FeatureEncoder& encoder,
                       const std::vector<std::size_t>& layers) {
  return perceptual_loss(image_to_var(pred), image_to_var(target), encoder, layers).item();
}

ad::Var gram_loss(const ad::Var& x_pred, const ad::Var& x_gt, const FeatureEncoder& encoder, GramNorm mode) {
  if (x_pred.shape() != x_gt.shape()) throw ShapeError("gram_loss: shape mismatch");
  return gram_distance(gram(encoder.forward(x_pred), mode), gram(encoder.forward(x_gt), mode));
}

double gram_loss(const Image& x_pred, const Image& x_gt, const FeatureEncoder& encoder, GramNorm mode) {
  return gram_loss(image_to_var(x_pred), image_to_var(x_gt), encoder, mode).item();
}

CsdGradient csd_loss_gradient(const DenoiserParams* base, const LatentTensor& z_pred, const ad::Var& cond,
                              const NoiseSchedule& schedule, std::uint64_t seed) {
  if (base == nullptr || !base->base_frozen) throw ConfigError("csd: frozen base denoiser unavailable");
  schedule.validate();
  Rng rng(seed);
  const std::size_t t = rng.below(schedule.steps);
  const double a = std::sqrt(schedule.alpha_bar[t]);
  const double s = std::sqrt(1.0 - schedule.alpha_bar[t]);
  LatentTensor zt(z_pred.height, z_pred.width, z_pred.channels);
  for (std::size_t i = 0; i < zt.size(); ++i) zt.data[i] = a * z_pred.data[i] + s * rng.normal();

  ParamBinder binder(base->store, false);
  const ad::Var zt_var = zt.to_var();
  const ad::Var cond_const = ad::detach(cond);
  const auto none = LoRAActivation::none();
  const double tt = static_cast<double>(t);
  const ad::Var e_cond = denoiser_forward(*base, binder, zt_var, cond_const, none, tt);
  const ad::Var e_null =
      denoiser_forward(*base, binder, zt_var, null_conditioning(*base, cond_const.dim(0)), none, tt);
  return {LatentTensor::from_var(ad::sub(e_cond, e_null)), t};
}

ad::Var csd_surrogate(const ad::Var& z_pred, const LatentTensor& gradient) {
  if (z_pred.shape() != gradient.shape()) throw ShapeError("csd: gradient shape mismatch");
  std::vector<double> target(z_pred.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = z_pred.value()[i] - gradient.data[i];
  return ad::scale(ad::mse(z_pred, ad::Var::constant(z_pred.shape(), std::move(target))), 0.5);
}

CompositeLoss composite_loss(int stage, const LossTerms& terms, const LossWeights& weights) {
  if (stage < 1 || stage > 3) throw ConfigError("composite_loss: stage must be 1, 2 or 3");
  weights.validate();
  struct Entry {
    const char* name;
    const ad::Var* term;
    double weight;
    int first_stage;
  };
  const Entry entries[] = {{"mse", &terms.mse, weights.lambda1, 1},
                           {"perceptual", &terms.perceptual, weights.lambda2, 2},
                           {"csd", &terms.csd, weights.lambda3, 2},
                           {"gram", &terms.gram, weights.lambda4, 3}};
  CompositeLoss out;
  std::vector<ad::Var> parts;
  for (const auto& e : entries) {
    if (stage < e.first_stage) continue;
    if (!e.term->defined())
      throw ConfigError(std::string("composite_loss: stage ") + std::to_string(stage) + " requires the " +
                        e.name + " term");
    out.raw[e.name] = e.term->item();
    parts.push_back(ad::scale(*e.term, e.weight));
  }
  out.objective = ad::add_n(parts);
  out.value = out.objective.item();
  return out;
}

}  // namespace gramsr
