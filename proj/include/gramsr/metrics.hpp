#pragma once

#include <map>
#include <string>

#include "gramsr/image.hpp"

namespace gramsr {

inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  // gram_distance, perceptual, ...
  std::map<std::string, double> auxiliary;
};

// 10 log10(1 / MSE) with unit peak; identical inputs return kPsnrCap.
double psnr(const Image& a, const Image& b);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

// Mean SSIM over all fully-contained Gaussian windows of single-channel
// inputs.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

// PSNR/SSIM on the luminance plane (RGB inputs are converted first).
MetricReport fidelity_report(const Image& restored, const Image& reference);

}  // namespace gramsr
