#include <doctest.h>

#include "gramsr/codec.hpp"
#include "gramsr/error.hpp"
#include "gramsr/losses.hpp"
#include "support.hpp"

using namespace gramsr;

namespace {

const EncoderSpec kCond{EncoderRole::conditioning, 8, 2, 32, 1001};
const EncoderSpec kGram{EncoderRole::gram, 8, 2, 16, 2002};

DenoiserParams frozen_base() {
  DenoiserArch a;
  a.latent_channels = 12;
  a.base_width = 4;
  a.cond_dim = 4;
  a.cond_tokens = 4;
  a.attn_dim = 4;
  a.time_dim = 4;
  DenoiserParams p = make_denoiser(a, 17);
  p.base_frozen = true;
  return p;
}

ad::Var scalar(double v) { return ad::Var::constant({}, {v}); }

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("mse") {
    const Image a = testing::random_image(8, 8, 3, 1), b = testing::random_image(8, 8, 3, 2);
    CHECK(mse_loss(a, a) == 0.0);
    CHECK(mse_loss(Image(4, 4, 1, 0.0), Image(4, 4, 1, 1.0)) == 1.0);
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    CHECK(std::fabs(mse_loss(a, b) - acc / a.size()) <= 1e-7);
    const Codec codec(4);
    CHECK(mse_loss(codec.encode(a), codec.encode(b)) == doctest::Approx(mse_loss(a, b)).epsilon(1e-12));
    CHECK_THROWS_AS(mse_loss(a, Image(8, 4, 3)), ShapeError);
    CHECK_THROWS_AS(mse_loss(LatentTensor(1, 1, 3), LatentTensor(1, 1, 4)), ShapeError);
  }

  TEST_CASE("perceptual surrogate") {
    const FeatureEncoder enc(kCond);
    const Image a = testing::random_image(16, 16, 3, 101), b = testing::random_image(16, 16, 3, 102);
    CHECK(perceptual_loss(a, a, enc, {0, 1}) == 0.0);
    CHECK(perceptual_loss(a, b, enc, {0, 1}) == perceptual_loss(b, a, enc, {0, 1}));
    CHECK(std::fabs(perceptual_loss(a, b, enc, {0, 1}) - 0.47376070284153338) <= 1e-12);
    CHECK_THROWS_AS(perceptual_loss(a, Image(16, 8, 3), enc, {0}), ShapeError);
    CHECK_THROWS_AS(perceptual_loss(a, b, enc, {}), ConfigError);
  }

  TEST_CASE("gram loss") {
    const Image a = testing::random_image(16, 16, 3, 101), b = testing::random_image(16, 16, 3, 102);
    const FeatureEncoder enc(kGram);
    CHECK(gram_loss(a, a, enc, GramNorm::global_frobenius) == 0.0);
    CHECK(std::fabs(gram_loss(a, b, enc, GramNorm::global_frobenius) - 9.1782315209209533e-05) <= 1e-15);
    const FeatureEncoder enc4(EncoderSpec{EncoderRole::gram, 4, 2, 16, 2002});
    CHECK(std::fabs(gram_loss(a, b, enc4, GramNorm::per_row) - 0.0015504548111992692) <= 1e-14);
    CHECK(gram_loss(a, b, enc, GramNorm::global_frobenius) >= 0.0);
  }

  TEST_CASE("gram loss gradient through encoder and codec") {
    const Codec codec(4);
    const FeatureEncoder enc(EncoderSpec{EncoderRole::gram, 2, 2, 16, 2002});
    const Image x = testing::random_image(8, 8, 3, 31), gt = testing::random_image(8, 8, 3, 32);
    const ad::Var gtv = image_to_var(gt);
    for (GramNorm mode : {GramNorm::global_frobenius, GramNorm::per_row}) {
      const LatentTensor z = codec.encode(x);
      const double err = testing::gradient_check(
          [&](const ad::Var& zv) { return gram_loss(codec.decode(zv), gtv, enc, mode); }, z.shape(), z.data, 1e-5);
      CHECK(err <= 1e-3);
    }
  }

  TEST_CASE("csd gradient") {
    const DenoiserParams base = frozen_base();
    const NoiseSchedule schedule = NoiseSchedule::linear();
    Rng rng(3);
    LatentTensor z(4, 4, 12);
    for (auto& v : z.data) v = rng.uniform();
    std::vector<double> cv(16);
    for (auto& v : cv) v = rng.uniform(-1, 1);
    const ad::Var cond = ad::Var::constant({4, 4}, cv);

    const CsdGradient g = csd_loss_gradient(&base, z, cond, schedule, 9);
    CHECK(g.gradient.same_shape(z));
    CHECK(g.timestep < schedule.steps);
    const CsdGradient again = csd_loss_gradient(&base, z, cond, schedule, 9);
    CHECK(again.gradient == g.gradient);
    CHECK(again.timestep == g.timestep);
    double mag = 0;
    for (double v : g.gradient.data) mag += std::fabs(v);
    CHECK(mag > 0.0);

    const CsdGradient null = csd_loss_gradient(&base, z, null_conditioning(base, 4), schedule, 9);
    for (double v : null.gradient.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(csd_loss_gradient(nullptr, z, cond, schedule, 1), ConfigError);
    DenoiserParams unfrozen = base;
    unfrozen.base_frozen = false;
    CHECK_THROWS_AS(csd_loss_gradient(&unfrozen, z, cond, schedule, 1), ConfigError);
  }

  TEST_CASE("csd surrogate injects g / numel") {
    Rng rng(4);
    LatentTensor g(2, 2, 3);
    std::vector<double> zv(12);
    for (auto& v : g.data) v = rng.uniform(-1, 1);
    for (auto& v : zv) v = rng.uniform(-1, 1);
    const ad::Var z = ad::Var::leaf({2, 2, 3}, zv);
    const ad::Var s = csd_surrogate(z, g);
    double half_mean_sq = 0;
    for (double v : g.data) half_mean_sq += v * v;
    CHECK(s.item() == doctest::Approx(0.5 * half_mean_sq / 12).epsilon(1e-12));
    ad::backward(s);
    for (std::size_t i = 0; i < 12; ++i) CHECK(z.grad()[i] == doctest::Approx(g.data[i] / 12).epsilon(1e-12));
  }

  TEST_CASE("composite loss") {
    const LossWeights w;
    LossTerms t1;
    t1.mse = scalar(0.5);
    CHECK(composite_loss(1, t1, w).value == 0.5);
    LossTerms t3{scalar(0.01), scalar(0.01), scalar(0.01), scalar(0.01)};
    CHECK(composite_loss(3, t3, w).value == doctest::Approx(5.04).epsilon(1e-12));
    CHECK(composite_loss(3, t3, LossWeights{0, 0, 0, 0}).value == 0.0);
    CHECK_THROWS_AS(composite_loss(2, t1, w), ConfigError);
    CHECK_THROWS_AS(composite_loss(0, t1, w), ConfigError);
    CHECK_THROWS_AS(LossWeights({-1, 0, 0, 0}).validate(), ConfigError);

    // Linear in each weight with the raw terms held fixed.
    const LossTerms t{scalar(0.3), scalar(0.2), scalar(0.7), scalar(0.05)};
    const double base = composite_loss(3, t, w).value;
    for (int k = 0; k < 4; ++k) {
      LossWeights w2 = w, w3 = w;
      double* p2[] = {&w2.lambda1, &w2.lambda2, &w2.lambda3, &w2.lambda4};
      double* p3[] = {&w3.lambda1, &w3.lambda2, &w3.lambda3, &w3.lambda4};
      *p2[k] += 1.0;
      *p3[k] += 2.0;
      const double d1 = composite_loss(3, t, w2).value - base;
      const double d2 = composite_loss(3, t, w3).value - base;
      CHECK(d2 == doctest::Approx(2 * d1).epsilon(1e-9));
    }
  }

  TEST_CASE("noise schedule") {
    const NoiseSchedule s = NoiseSchedule::linear();
    CHECK(s.steps == 200);
    CHECK(s.beta.front() == 1e-4);
    CHECK(std::fabs(s.beta.back() - 2e-2) <= 1e-15);
    for (std::size_t t = 1; t < s.steps; ++t) CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.1), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.1, 1.0), ConfigError);
    CHECK_THROWS_AS(NoiseSchedule::linear(0), ConfigError);
  }
}
