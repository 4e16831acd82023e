#include "gramsr/degrade.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

void DegradationConfig::validate() const {
  if (!(blur_sigma.lo >= 0.0 && blur_sigma.lo <= blur_sigma.hi))
    throw ConfigError("degradation: blur_sigma_range must satisfy 0 <= lo <= hi");
  if (!(noise_sigma.lo >= 0.0 && noise_sigma.lo <= noise_sigma.hi && noise_sigma.hi <= 0.2))
    throw ConfigError("degradation: noise_sigma_range must lie within [0, 0.2]");
  if (!(quality.lo >= 10 && quality.lo <= quality.hi && quality.hi <= 95))
    throw ConfigError("degradation: compression_quality_range must lie within [10, 95]");
  if (downscale_factor < 2) throw ConfigError("degradation: downscale_factor must be >= 2");
}

DegradationDraw draw_parameters(const DegradationConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  DegradationDraw d;
  d.blur_sigma = rng.uniform(cfg.blur_sigma.lo, cfg.blur_sigma.hi);
  d.noise_sigma = rng.uniform(cfg.noise_sigma.lo, cfg.noise_sigma.hi);
  d.quality = cfg.quality.lo +
              static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.quality.hi - cfg.quality.lo + 1)));
  return d;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) s += (k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma)));
  for (double& v : k) v /= s;

  const auto h = static_cast<std::int64_t>(img.height), w = static_cast<std::int64_t>(img.width);
  auto clamp = [](std::int64_t v, std::int64_t n) { return std::clamp<std::int64_t>(v, 0, n - 1); };
  Image tmp(img.height, img.width, img.channels), out(img.height, img.width, img.channels);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += k[t + radius] * img.at(y, static_cast<std::size_t>(clamp(x + t, w)), c);
        tmp.at(y, x, c) = acc;
      }
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t)
          acc += k[t + radius] * tmp.at(static_cast<std::size_t>(clamp(y + t, h)), x, c);
        out.at(y, x, c) = acc;
      }
  return clip01(std::move(out));
}

namespace {

// Standard JPEG luminance table.
constexpr std::array<int, 64> kQuantTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// Orthonormal 8-point DCT-II basis: basis[u][x].
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x)
        b[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                  std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    return b;
  }();
  return basis;
}

}  // namespace

Image block_dct_compress(const Image& img, int quality) {
  if (quality < 10 || quality > 95) throw ConfigError("compression quality must lie in [10, 95]");
  // Linear strength ramp: 0 at quality 95, 1 at quality 10, where the table
  // is applied at 5x (JPEG's scaling at quality 10).
  const double strength = (95.0 - quality) / 85.0;
  if (strength == 0.0) return img;
  const auto& basis = dct_basis();
  Image out = img;
  const std::size_t h = img.height, w = img.width;
  for (std::size_t c = 0; c < img.channels; ++c)
    for (std::size_t by = 0; by < h; by += 8)
      for (std::size_t bx = 0; bx < w; bx += 8) {
        double block[8][8], coef[8][8], tmp[8][8];
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            block[y][x] = img.at(std::min(by + y, h - 1), std::min(bx + x, w - 1), c);
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += basis[u][y] * block[y][x];
            tmp[u][x] = s;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += basis[v][x] * tmp[u][x];
            coef[u][v] = s;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            if (u == 0 && v == 0) continue;
            const double step = kQuantTable[u * 8 + v] / 255.0 * 5.0 * strength;
            coef[u][v] = step * std::round(coef[u][v] / step);
          }
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += basis[u][y] * coef[u][v];
            tmp[y][v] = s;
          }
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) {
            if (by + y >= h || bx + x >= w) continue;
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += basis[v][x] * tmp[y][v];
            out.at(by + y, bx + x, c) = s;
          }
      }
  return clip01(std::move(out));
}

Image degrade(const Image& hq, const DegradationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  validate(hq);
  const std::size_t f = cfg.downscale_factor;
  if (hq.height % f || hq.width % f)
    throw SizeError("degrade: " + std::to_string(hq.height) + "x" + std::to_string(hq.width) +
                    " not divisible by " + std::to_string(f));
  const DegradationDraw d = draw_parameters(cfg, seed);

  Image x = gaussian_blur(hq, d.blur_sigma);
  x = downsample_area(x, f);
  // Separate stream for the noise field so its draws do not depend on the
  // parameter draws above.
  Rng noise(seed ^ 0x9E3779B97F4A7C15ull);
  for (double& v : x.data) v = std::clamp(v + d.noise_sigma * noise.normal(), 0.0, 1.0);
  return block_dct_compress(x, d.quality);
}

ImagePair make_pair(const Image& hq, const DegradationConfig& cfg, std::uint64_t seed) {
  return {degrade(hq, cfg, seed), hq};
}

}  // namespace gramsr
