#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/codec.hpp"
#include "gramsr/denoiser.hpp"
#include "gramsr/featenc.hpp"
#include "gramsr/image.hpp"

namespace gramsr {

struct LossWeights {
  double lambda1 = 1.0;    // MSE
  double lambda2 = 2.0;    // perceptual
  double lambda3 = 1.0;    // CSD
  double lambda4 = 500.0;  // gram

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct NoiseSchedule {
  std::size_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(std::size_t steps = 200, double beta_start = 1e-4, double beta_end = 2e-2);
  void validate() const;
};

ad::Var mse_loss(const ad::Var& pred, const ad::Var& target);
double mse_loss(const Image& pred, const Image& target);
double mse_loss(const LatentTensor& pred, const LatentTensor& target);

// Mean over `layers` of the mean squared distance between frozen encoder
// activations of pred and target.
ad::Var perceptual_loss(const ad::Var& pred, const ad::Var& target, const FeatureEncoder& encoder,
                        const std::vector<std::size_t>& layers);
double perceptual_loss(const Image& pred, const Image& target, const FeatureEncoder& encoder,
                       const std::vector<std::size_t>& layers);

// gram_distance(gram(E(x_pred)), gram(E(x_gt))) for the gram encoder E.
ad::Var gram_loss(const ad::Var& x_pred, const ad::Var& x_gt, const FeatureEncoder& encoder, GramNorm mode);
double gram_loss(const Image& x_pred, const Image& x_gt, const FeatureEncoder& encoder, GramNorm mode);

// Classifier direction of the frozen base at a uniformly drawn noise level:
//   eps_base(z_t, cond, t) - eps_base(z_t, null, t),
//   z_t = sqrt(abar_t) z_pred + sqrt(1 - abar_t) noise.
// Nothing is differentiated through the teacher.
struct CsdGradient {
  LatentTensor gradient;
  std::size_t timestep = 0;
};

CsdGradient csd_loss_gradient(const DenoiserParams* base, const LatentTensor& z_pred, const ad::Var& cond,
                              const NoiseSchedule& schedule, std::uint64_t seed);

// Scalar whose value is 0.5 * mean(g^2) and whose gradient w.r.t. z_pred is
// g / numel, i.e. the injected CSD direction with mean reduction.
ad::Var csd_surrogate(const ad::Var& z_pred, const LatentTensor& gradient);

struct LossTerms {
  ad::Var mse;
  ad::Var perceptual;
  ad::Var csd;
  ad::Var gram;
};

struct CompositeLoss {
  ad::Var objective;
  double value = 0.0;
  std::map<std::string, double> raw;
};

// Stage 1: MSE. Stage 2: MSE + perceptual + CSD. Stage 3: all four.
CompositeLoss composite_loss(int stage, const LossTerms& terms, const LossWeights& weights);

}  // namespace gramsr
