#include <doctest.h>

#include "gramsr/error.hpp"
#include "gramsr/featenc.hpp"
#include "support.hpp"

using namespace gramsr;

namespace {

FeatureMap random_features(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMap f{n, d, std::vector<double>(n * d)};
  for (auto& v : f.values) v = rng.uniform(-1.0, 1.0);
  return f;
}

// Random orthogonal matrix by Gram-Schmidt on a seeded random matrix.
std::vector<double> random_orthogonal(std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> q(d * d);
  for (auto& v : q) v = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double dot = 0;
      for (std::size_t k = 0; k < d; ++k) dot += q[i * d + k] * q[j * d + k];
      for (std::size_t k = 0; k < d; ++k) q[i * d + k] -= dot * q[j * d + k];
    }
    double n = 0;
    for (std::size_t k = 0; k < d; ++k) n += q[i * d + k] * q[i * d + k];
    for (std::size_t k = 0; k < d; ++k) q[i * d + k] /= std::sqrt(n);
  }
  return q;
}

FeatureMap rotate(const FeatureMap& f, const std::vector<double>& q) {
  FeatureMap out{f.num_patches, f.dim, std::vector<double>(f.values.size(), 0.0)};
  for (std::size_t i = 0; i < f.num_patches; ++i)
    for (std::size_t j = 0; j < f.dim; ++j)
      for (std::size_t k = 0; k < f.dim; ++k) out.values[i * f.dim + j] += f.at(i, k) * q[k * f.dim + j];
  return out;
}

// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi sweeps.
double min_eigenvalue(std::vector<double> a, std::size_t n) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
      }
  }
  double m = a[0];
  for (std::size_t i = 1; i < n; ++i) m = std::min(m, a[i * n + i]);
  return m;
}

}  // namespace

TEST_SUITE("featenc") {
  TEST_CASE("hand-computed N = 2 examples") {
    const GramMatrix g1 = gram(FeatureMap{2, 2, {1, 0, 0, 1}});
    const std::vector<double> want{0.5, 0.0, 0.0, 0.5};
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(g1.values[i] - want[i]) <= 1e-15);
    const GramMatrix g2 = gram(FeatureMap{2, 2, {1, 1, 1, 1}});
    for (double v : g2.values) CHECK(std::fabs(v - 0.5) <= 1e-12);
    CHECK(std::fabs(gram_distance(g1, g2) - 0.125) <= 1e-12);
  }

  TEST_CASE("gram algebra on random features") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const FeatureMap f = random_features(7, 5, seed);
      for (GramNorm mode : {GramNorm::global_frobenius, GramNorm::per_row}) {
        const GramMatrix g = gram(f, mode);
        double trace = 0;
        for (std::size_t i = 0; i < 7; ++i) {
          trace += g.at(i, i);
          for (std::size_t j = 0; j < 7; ++j) CHECK(std::fabs(g.at(i, j) - g.at(j, i)) <= 1e-12);
          if (mode == GramNorm::per_row) CHECK(std::fabs(g.at(i, i) - 1.0) <= 1e-6);
        }
        if (mode == GramNorm::global_frobenius) CHECK(std::fabs(trace - 1.0) <= 1e-12);
        CHECK(min_eigenvalue(g.values, 7) >= -1e-6);
        const GramMatrix gr = gram(rotate(f, random_orthogonal(5, seed + 50)), mode);
        for (std::size_t i = 0; i < g.values.size(); ++i) CHECK(std::fabs(g.values[i] - gr.values[i]) <= 1e-6);
      }
    }
  }

  TEST_CASE("gram_distance properties") {
    const GramMatrix a = gram(random_features(6, 4, 1)), b = gram(random_features(6, 4, 2));
    CHECK(gram_distance(a, a) == 0.0);
    CHECK(gram_distance(a, b) == gram_distance(b, a));
    CHECK(gram_distance(a, b) > 0.0);
    CHECK_THROWS_AS(gram_distance(a, gram(random_features(5, 4, 3))), ShapeError);

    // Permuting the rows of both feature maps leaves the distance unchanged.
    const FeatureMap fa = random_features(6, 4, 1), fb = random_features(6, 4, 2);
    const std::size_t perm[6] = {3, 0, 5, 1, 4, 2};
    FeatureMap pa = fa, pb = fb;
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < 4; ++k) {
        pa.values[i * 4 + k] = fa.at(perm[i], k);
        pb.values[i * 4 + k] = fb.at(perm[i], k);
      }
    CHECK(std::fabs(gram_distance(gram(pa), gram(pb)) - gram_distance(gram(fa), gram(fb))) <= 1e-15);
  }

  TEST_CASE("degenerate input") {
    CHECK_THROWS_AS(gram(FeatureMap{2, 3, std::vector<double>(6, 0.0)}), DegenerateInputError);
    CHECK_THROWS_AS(gram(FeatureMap{2, 3, {1, 2, 3, 0, 0, 0}}, GramNorm::per_row), DegenerateInputError);
  }

  TEST_CASE("gram_distance gradient matches finite differences") {
    const FeatureMap target = random_features(4, 3, 9);
    for (GramNorm mode : {GramNorm::global_frobenius, GramNorm::per_row}) {
      const FeatureMap f = random_features(4, 3, 10);
      const ad::Var gtm = gram(target.to_var(), mode);
      const double err = testing::gradient_check(
          [&](const ad::Var& x) { return gram_distance(gram(x, mode), gtm); }, {4, 3}, f.values, 1e-4);
      CHECK(err <= 1e-4);
    }
  }

  TEST_CASE("extract_features") {
    const FeatureEncoder enc(EncoderSpec{EncoderRole::gram, 4, 2, 16, 23});
    const Image x = testing::random_image(16, 16, 3, 4);
    const FeatureMap f = enc.extract(x);
    CHECK(f.num_patches == 16);
    CHECK(f.dim == 16);
    CHECK(enc.extract(x) == f);
    Image y = x;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) y.at(r, c, 0) = 1.0 - y.at(r, c, 0);
    const FeatureMap fy = enc.extract(y);
    bool differs = false;
    for (std::size_t k = 0; k < 16; ++k) differs |= fy.at(0, k) != f.at(0, k);
    CHECK(differs);
    CHECK_THROWS_AS(enc.extract(Image(18, 16, 3)), SizeError);
    for (double v : f.values) CHECK(std::isfinite(v));
  }

  TEST_CASE("encoder pair validation") {
    const EncoderSpec c{EncoderRole::conditioning, 8, 2, 32, 1};
    CHECK_NOTHROW(validate_encoder_pair(c, EncoderSpec{EncoderRole::gram, 8, 2, 16, 2}));
    CHECK_THROWS_AS(validate_encoder_pair(c, EncoderSpec{EncoderRole::gram, 8, 2, 16, 1}), ConfigError);
    CHECK_THROWS_AS(validate_encoder_pair(c, EncoderSpec{EncoderRole::gram, 8, 2, 32, 2}), ConfigError);
  }

  TEST_CASE("adapter") {
    AdapterParams zero{std::vector<double>(12, 0.0), std::vector<double>(3, 0.0), std::vector<double>(6, 0.0),
                       std::vector<double>(2, 0.0), 4, 3, 2, false};
    const FeatureMap f = random_features(3, 4, 1);
    for (double v : adapt(f, zero).values) CHECK(v == 0.0);

    AdapterParams id{std::vector<double>(16, 0.0), std::vector<double>(4, 0.0), std::vector<double>(16, 0.0),
                     std::vector<double>(4, 0.0), 4, 4, 4, false};
    for (int i = 0; i < 4; ++i) id.w1[i * 4 + i] = id.w2[i * 4 + i] = 1.0;
    FeatureMap pos = f;
    for (auto& v : pos.values) v = std::fabs(v);
    CHECK(adapt(pos, id).values == pos.values);

    Rng rng(7);
    AdapterParams p{std::vector<double>(4 * 5), std::vector<double>(5), std::vector<double>(5 * 2),
                    std::vector<double>(2), 4, 5, 2, false};
    for (auto* v : {&p.w1, &p.b1, &p.w2, &p.b2})
      for (auto& x : *v) x = rng.uniform(-1, 1);
    const FeatureMap t = adapt(f, p);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t o = 0; o < 2; ++o) {
        double acc = p.b2[o];
        for (std::size_t h = 0; h < 5; ++h) {
          double pre = p.b1[h];
          for (std::size_t k = 0; k < 4; ++k) pre += f.at(i, k) * p.w1[k * 5 + h];
          acc += std::max(pre, 0.0) * p.w2[h * 2 + o];
        }
        CHECK(std::fabs(t.at(i, o) - acc) <= 1e-6);
      }
    CHECK_THROWS_AS(adapt(random_features(3, 5, 1), p), ShapeError);
  }
}
