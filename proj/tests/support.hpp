#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gramsr/autodiff.hpp"
#include "gramsr/config.hpp"
#include "gramsr/trainer.hpp"
#include "gramsr/image.hpp"
#include "gramsr/rng.hpp"

namespace testing {

inline gramsr::Image random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  gramsr::Rng rng(seed);
  gramsr::Image img(h, w, c);
  for (auto& v : img.data) v = rng.uniform();
  return img;
}

// Values on the k / 2^bits grid. Bicubic weights at x4 are dyadic, so
// upsampling such images is exact in double precision.
inline gramsr::Image dyadic_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed,
                                  int bits = 8) {
  gramsr::Rng rng(seed);
  gramsr::Image img(h, w, c);
  const double n = std::ldexp(1.0, bits);
  for (auto& v : img.data) v = static_cast<double>(rng.below(static_cast<std::uint64_t>(n) + 1)) / n;
  return img;
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-8});
  return std::fabs(a - b) / denom;
}

// Central difference of f around x[i].
inline double central_diff(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                           std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Desk config shrunk for unit tests: 32x32 HQ, 8x8 LQ, a handful of steps.
inline gramsr::RunConfig tiny_config(std::uint64_t seed = 5) {
  gramsr::RunConfig cfg;
  cfg.patch_size = 32;
  cfg.synthetic_train_count = 4;
  cfg.synthetic_val_count = 2;
  cfg.batch_size = 2;
  cfg.max_steps = {3, 2, 2, 4};
  cfg.learning_rate = {1e-3, 1e-3, 1e-3, 1e-3};
  cfg.eval_every = 1;
  cfg.patience = 2;
  cfg.denoiser.base_width = 8;
  cfg.seeds = {seed, seed + 1, seed + 2};
  cfg.finalize();
  return cfg;
}

}  // namespace testing

namespace testing {

// Norm-wise relative error between the analytic gradient of f at x and
// central differences (step h) over the coordinates in `coords` (all when
// empty).
inline double gradient_check(const std::function<gramsr::ad::Var(const gramsr::ad::Var&)>& f,
                             const gramsr::ad::Shape& shape, const std::vector<double>& x, double h,
                             std::vector<std::size_t> coords = {}) {
  using gramsr::ad::Var;
  const Var leaf = Var::leaf(shape, x);
  const Var out = f(leaf);
  gramsr::ad::backward(out);
  const auto g = leaf.grad();
  if (coords.empty())
    for (std::size_t i = 0; i < x.size(); ++i) coords.push_back(i);
  auto scalar = [&](const std::vector<double>& v) { return f(Var::constant(shape, v)).item(); };
  double num = 0.0, den = 0.0;
  for (std::size_t i : coords) {
    const double fd = central_diff(scalar, x, i, h);
    num += (g[i] - fd) * (g[i] - fd);
    den += fd * fd;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace testing

namespace testing {

// Stage-3 shaped checkpoint on the tiny config whose three LoRA sets all move
// the prediction (random B instead of trained ones).
inline gramsr::Checkpoint stage3_checkpoint(std::uint64_t seed = 41) {
  const gramsr::RunConfig cfg = tiny_config(seed);
  gramsr::Checkpoint c = gramsr::pretrain_base(cfg);
  gramsr::Rng rng(seed + 100);
  for (auto& p : c.model.store.params())
    if (p.group.rfind("lora.", 0) == 0 && p.name.back() == 'B')
      for (auto& v : p.value) v = rng.uniform(-0.05, 0.05);
  c.stage = 3;
  return c;
}

}  // namespace testing
