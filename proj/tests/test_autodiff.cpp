#include <doctest.h>

#include "gramsr/autodiff.hpp"
#include "gramsr/error.hpp"
#include "support.hpp"

using namespace gramsr;
using ad::Var;

namespace {

std::vector<double> rand_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Weighted sum so every output element carries a distinct gradient.
Var probe(const Var& y, std::uint64_t seed) { return ad::sum(ad::mul(y, Var::constant(y.shape(), rand_vec(y.size(), seed)))); }

}  // namespace

TEST_SUITE("autodiff") {
  TEST_CASE("elementwise and reduction ops") {
    const auto x = rand_vec(12, 1);
    using F = std::function<Var(const Var&)>;
    const std::vector<std::pair<const char*, F>> ops = {
        {"silu", [](const Var& v) { return probe(ad::silu(v), 2); }},
        {"gelu", [](const Var& v) { return probe(ad::gelu(v), 3); }},
        {"softmax", [](const Var& v) { return probe(ad::softmax_rows(v), 4); }},
        {"layer_norm", [](const Var& v) { return probe(ad::layer_norm_rows(v), 5); }},
        {"normalize_rows", [](const Var& v) { return probe(ad::normalize_rows(v), 6); }},
        {"normalize_frobenius", [](const Var& v) { return probe(ad::normalize_frobenius(v), 7); }},
        {"transpose", [](const Var& v) { return probe(ad::transpose(v), 8); }},
        {"mse", [](const Var& v) { return ad::mse(v, Var::constant({3, 4}, rand_vec(12, 9))); }},
        {"mean", [](const Var& v) { return ad::mean(ad::mul(v, v)); }},
    };
    for (const auto& [name, f] : ops) {
      CAPTURE(name);
      CHECK(testing::gradient_check(f, {3, 4}, x, 1e-5) <= 1e-6);
    }
  }

  TEST_CASE("matmul family") {
    const Var b = Var::constant({4, 5}, rand_vec(20, 11));
    const Var bt = Var::constant({5, 4}, rand_vec(20, 12));
    CHECK(testing::gradient_check([&](const Var& a) { return probe(ad::matmul(a, b), 1); }, {3, 4}, rand_vec(12, 2),
                                  1e-5) <= 1e-7);
    CHECK(testing::gradient_check([&](const Var& a) { return probe(ad::matmul_nt(a, bt), 1); }, {3, 4},
                                  rand_vec(12, 3), 1e-5) <= 1e-7);
    const Var a = Var::constant({3, 4}, rand_vec(12, 4));
    CHECK(testing::gradient_check([&](const Var& w) { return probe(ad::matmul(a, w), 1); }, {4, 5}, rand_vec(20, 5),
                                  1e-5) <= 1e-7);
    CHECK_THROWS_AS(ad::matmul(a, a), ShapeError);
  }

  TEST_CASE("spatial ops") {
    const ad::Shape s{4, 4, 3};
    const auto x = rand_vec(48, 21);
    const Var w = Var::constant({2, 27}, rand_vec(54, 22));
    const Var bias = Var::constant({2}, rand_vec(2, 23));
    CHECK(testing::gradient_check([&](const Var& v) { return probe(ad::conv3x3(v, w, bias), 1); }, s, x, 1e-5) <=
          1e-7);
    CHECK(testing::gradient_check([&](const Var& wv) { return probe(ad::conv3x3(Var::constant(s, x), wv, bias), 2); },
                                  {2, 27}, rand_vec(54, 24), 1e-5) <= 1e-7);
    CHECK(testing::gradient_check([](const Var& v) { return probe(ad::avg_pool2(v), 3); }, s, x, 1e-5) <= 1e-7);
    CHECK(testing::gradient_check([](const Var& v) { return probe(ad::upsample_nearest2(v), 4); }, s, x, 1e-5) <=
          1e-7);
    const Var other = Var::constant({4, 4, 2}, rand_vec(32, 25));
    CHECK(testing::gradient_check([&](const Var& v) { return probe(ad::concat_last(v, other), 5); }, s, x, 1e-5) <=
          1e-7);
    CHECK(testing::gradient_check(
              [](const Var& v) { return probe(ad::gather(v, {0, 3, -1, 3, 7, 47}, {6}), 6); }, s, x, 1e-5) <= 1e-7);
  }

  TEST_CASE("conv3x3 matches a direct loop") {
    const Var x = Var::constant({3, 4, 2}, rand_vec(24, 31));
    const Var w = Var::constant({3, 18}, rand_vec(54, 32));
    const Var b = Var::constant({3}, rand_vec(3, 33));
    const Var y = ad::conv3x3(x, w, b);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        for (int o = 0; o < 3; ++o) {
          double acc = b.value()[o];
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx)
              for (int c = 0; c < 2; ++c) {
                const int yy = i + ky - 1, xx = j + kx - 1;
                if (yy < 0 || yy >= 3 || xx < 0 || xx >= 4) continue;
                acc += w.value()[o * 18 + (ky * 3 + kx) * 2 + c] * x.value()[(yy * 4 + xx) * 2 + c];
              }
          CHECK(y.value()[(i * 4 + j) * 3 + o] == doctest::Approx(acc).epsilon(1e-12));
        }
  }

  TEST_CASE("constants never get gradients") {
    const Var c = Var::constant({2}, {1.0, 2.0});
    const Var l = Var::leaf({2}, {3.0, 4.0});
    ad::backward(ad::sum(ad::mul(c, l)));
    CHECK(c.grad().empty());
    CHECK(l.grad()[0] == 1.0);
    CHECK(l.grad()[1] == 2.0);
  }
}
