#pragma once

#include <cstdint>
#include <utility>

#include "gramsr/image.hpp"

namespace gramsr {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

struct QualityInterval {
  int lo = 95;
  int hi = 95;
  friend bool operator==(const QualityInterval&, const QualityInterval&) = default;
};

// Single ordered pass: blur -> area resize -> gaussian noise -> block-DCT
// compression. Every parameter is drawn uniformly from its interval.
struct DegradationConfig {
  Interval blur_sigma{0.2, 1.5};
  Interval noise_sigma{0.0, 0.05};
  std::size_t downscale_factor = 4;
  QualityInterval quality{40, 95};

  void validate() const;
  friend bool operator==(const DegradationConfig&, const DegradationConfig&) = default;
};

// Parameters actually drawn for one degrade() call.
struct DegradationDraw {
  double blur_sigma = 0.0;
  double noise_sigma = 0.0;
  int quality = 95;
};

DegradationDraw draw_parameters(const DegradationConfig& cfg, std::uint64_t seed);

Image degrade(const Image& hq, const DegradationConfig& cfg, std::uint64_t seed);

struct ImagePair {
  Image lq;
  Image hq;
};

ImagePair make_pair(const Image& hq, const DegradationConfig& cfg, std::uint64_t seed);

// Individual stages, exposed for testing.
Image gaussian_blur(const Image& img, double sigma);
// Quantizes AC coefficients of 8x8 orthonormal DCT blocks; the DC term is
// kept exact so block means (and constant images) survive unchanged.
// Quality 95 is lossless.
Image block_dct_compress(const Image& img, int quality);

}  // namespace gramsr
