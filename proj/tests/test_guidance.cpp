#include <doctest.h>

#include <sstream>

#include "gramsr/error.hpp"
#include "gramsr/guidance.hpp"
#include "gramsr/trainer.hpp"
#include "support.hpp"

using namespace gramsr;

namespace {

const Checkpoint& guided_ckpt() {
  static const Checkpoint ck = testing::stage3_checkpoint(41);
  return ck;
}

struct Passes {
  PreparedInput in;
  ConditioningTokens tokens;
  ForwardPasses p;
};

Passes passes_for(const Image& lq) {
  const Checkpoint& c = guided_ckpt();
  const FrozenParts frozen(c.config);
  Passes out;
  out.in = frozen.prepare(lq);
  out.tokens = tokens_for(c.model, out.in);
  out.p = forward_passes(c.model, out.in.z_lq, out.tokens);
  return out;
}

// Exact in binary128 for dyadic scales and the magnitudes involved here.
double oracle(double e0, double ep, double es, double eg, const GuidanceScales& s, GuidanceMode mode) {
  using q = __float128;
  const q base = e0;
  const q dpix = mode == GuidanceMode::literal ? q(ep) : q(ep) - q(e0);
  const q dsem = q(es) - q(ep);
  const q dgram = q(eg) - q(es);
  return static_cast<double>(base + q(s.lambda_pix) * dpix + q(s.lambda_sem) * dsem + q(s.lambda_gram) * dgram);
}

}  // namespace

TEST_SUITE("guidance") {
  TEST_CASE("the three sets produce distinct predictions") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 1));
    CHECK(ps.p.eps0 != ps.p.eps_pix);
    CHECK(ps.p.eps_pix != ps.p.eps_sem);
    CHECK(ps.p.eps_sem != ps.p.eps_gram);
  }

  TEST_CASE("deltas are exact differences") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 2));
    for (GuidanceMode mode : {GuidanceMode::literal, GuidanceMode::residual}) {
      const GuidanceDeltas d = deltas_from_passes(ps.p, mode);
      for (std::size_t i = 0; i < ps.p.eps0.size(); ++i) {
        using q = __float128;
        const q want_pix = mode == GuidanceMode::literal ? q(ps.p.eps_pix.data[i])
                                                         : q(ps.p.eps_pix.data[i]) - q(ps.p.eps0.data[i]);
        CHECK(q(d.pix.value.data[i]) + q(d.pix.residue.data[i]) == want_pix);
        CHECK(q(d.gram.value.data[i]) + q(d.gram.residue.data[i]) ==
              q(ps.p.eps_gram.data[i]) - q(ps.p.eps_sem.data[i]));
      }
    }
  }

  TEST_CASE("unit and zero scales") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 3));
    const GuidanceDeltas res = deltas_from_passes(ps.p, GuidanceMode::residual);
    const GuidanceDeltas lit = deltas_from_passes(ps.p, GuidanceMode::literal);
    CHECK(compose_epsilon(ps.p.eps0, res, {1, 1, 1}) == ps.p.eps_gram);
    CHECK(compose_epsilon(ps.p.eps0, res, {0, 0, 0}) == ps.p.eps0);
    CHECK(compose_epsilon(ps.p.eps0, lit, {0, 0, 0}) == ps.p.eps0);
    const LatentTensor l1 = compose_epsilon(ps.p.eps0, lit, {1, 1, 1});
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(l1.data[i] == ps.p.eps0.data[i] + ps.p.eps_gram.data[i]);
  }

  TEST_CASE("composition matches the exact oracle") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 4));
    const std::vector<GuidanceScales> grid{{0, 0, 0.5}, {0, 0.75, 0}, {0.25, 0, 0},   {1, 1, 0.25},
                                           {2, -1, 3},  {1.5, 0.5, 0.125}, {-0.5, 4, 1}};
    for (GuidanceMode mode : {GuidanceMode::literal, GuidanceMode::residual}) {
      const GuidanceDeltas d = deltas_from_passes(ps.p, mode);
      for (const auto& s : grid) {
        const LatentTensor e = compose_epsilon(ps.p.eps0, d, s);
        for (std::size_t i = 0; i < e.size(); ++i)
          CHECK(e.data[i] == oracle(ps.p.eps0.data[i], ps.p.eps_pix.data[i], ps.p.eps_sem.data[i],
                                    ps.p.eps_gram.data[i], s, mode));
      }
    }
  }

  TEST_CASE("scaled deltas halve exactly") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 5));
    const GuidanceDeltas d = deltas_from_passes(ps.p, GuidanceMode::residual);
    for (double lambda : {1.0, 0.7, 3.0, -2.5}) {
      const LatentTensor full = scaled_delta(d.gram, lambda), half = scaled_delta(d.gram, lambda / 2);
      for (std::size_t i = 0; i < full.size(); ++i) CHECK(half.data[i] == full.data[i] / 2);
    }
    const LatentTensor zero = scaled_delta(d.sem, 0.0);
    for (double v : zero.data) CHECK(v == 0.0);
  }

  TEST_CASE("compose rejects mismatched shapes") {
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 6));
    GuidanceDeltas d = deltas_from_passes(ps.p, GuidanceMode::residual);
    d.sem.value = LatentTensor(1, 1, 48);
    CHECK_THROWS_AS(compose_epsilon(ps.p.eps0, d, {}), ShapeError);
  }

  TEST_CASE("guided inference") {
    const GuidedModel model(guided_ckpt());
    const Image lq = testing::dyadic_image(8, 8, 3, 7);
    const Image unit = model.infer(lq, {1, 1, 1}, GuidanceMode::residual);
    CHECK(unit.height == 32);
    CHECK(unit.width == 32);
    CHECK(unit.channels == 3);
    for (double v : unit.data) CHECK((v >= 0.0 && v <= 1.0));
    CHECK(unit.data == model.infer_trained(lq).data);
    CHECK(infer(lq, {1, 1, 1}, GuidanceMode::residual, guided_ckpt()).data == unit.data);

    const Passes ps = passes_for(lq);
    const Image base = model.infer(lq, {0, 0, 0}, GuidanceMode::literal);
    CHECK(base.data == restore_from_epsilon(model.frozen().codec(), ps.in.z_lq, ps.p.eps0).data);

    CHECK_THROWS_AS(model.infer(lq, {std::nan(""), 1, 1}, GuidanceMode::residual), ConfigError);
    CHECK_THROWS_AS(model.infer(Image(8, 8, 1, 0.5), {}, GuidanceMode::residual), ShapeError);
    CHECK_THROWS_AS(model.infer(testing::random_image(6, 6, 3, 1), {}, GuidanceMode::residual), ShapeError);
  }

  TEST_CASE("guidance needs a stage-3 checkpoint") {
    Checkpoint c = guided_ckpt();
    c.stage = 2;
    const Passes ps = passes_for(testing::random_image(8, 8, 3, 8));
    CHECK_THROWS_AS(compute_deltas(ps.in.z_lq, ps.tokens, c, GuidanceMode::residual), ConfigError);
    const GuidedModel model(c);
    CHECK_THROWS_AS(model.infer(testing::random_image(8, 8, 3, 8), {}, GuidanceMode::residual), ConfigError);
    CHECK(model.infer_trained(testing::random_image(8, 8, 3, 8)).height == 32);
  }

  TEST_CASE("mode names") {
    CHECK(guidance_mode_from_string("literal") == GuidanceMode::literal);
    CHECK(guidance_mode_from_string(to_string(GuidanceMode::residual)) == GuidanceMode::residual);
    CHECK_THROWS_AS(guidance_mode_from_string("both"), ConfigError);
  }

  TEST_CASE("sweep") {
    const GuidedModel model(guided_ckpt());
    const Image lq = testing::random_image(8, 8, 3, 9);
    const auto grid = gram_sweep_grid();
    REQUIRE(grid.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(grid[k].lambda_pix == 1.0);
      CHECK(grid[k].lambda_sem == 1.0);
      CHECK(grid[k].lambda_gram == 0.25 * static_cast<double>(k + 1));
    }

    const SweepReport blind = sweep(model, lq, grid, GuidanceMode::residual);
    REQUIRE(blind.rows.size() == 4);
    for (const auto& r : blind.rows) CHECK_FALSE(r.has_reference_metrics);
    std::istringstream csv(blind.to_csv());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "lambda_pix,lambda_sem,lambda_gram,psnr,ssim,gram_distance,perceptual");
    std::getline(csv, line);
    CHECK(line.rfind("1,1,0.25,,,", 0) == 0);
    std::size_t rows = 1;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4);

    const Image gt = testing::random_image(32, 32, 3, 10);
    const SweepReport ref = sweep(model, lq, {grid[1], grid[1]}, GuidanceMode::residual, gt);
    CHECK(ref.rows[0].has_reference_metrics);
    CHECK(ref.rows[0].metrics.psnr == ref.rows[1].metrics.psnr);
    CHECK(ref.rows[0].metrics.auxiliary == ref.rows[1].metrics.auxiliary);
    const MetricReport direct =
        evaluate_restoration(model.infer(lq, grid[1], GuidanceMode::residual), gt, model.frozen(), guided_ckpt().config);
    CHECK(ref.rows[0].metrics.psnr == direct.psnr);
    CHECK(ref.rows[0].metrics.ssim == direct.ssim);

    CHECK_THROWS_AS(sweep(model, lq, {}, GuidanceMode::residual), ConfigError);
    CHECK_THROWS_AS(sweep(model, lq, grid, GuidanceMode::residual, testing::random_image(16, 16, 3, 1)), ShapeError);
  }
}
