#include "gramsr/metrics.hpp"

#include <cmath>
#include <vector>

#include "gramsr/error.hpp"

namespace gramsr {

double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    s += d * d;
  }
  if (s == 0.0) return kPsnrCap;
  const double mse = s / static_cast<double>(a.size());
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double s = 0.0;
  for (int i = 0; i < size; ++i) s += (k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma)));
  for (double& v : k) v /= s;
  return k;
}

// Separable 'valid' filtering of a plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += k[t] * in[y * w + x + t];
      tmp[y * ow + x] = s;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t t = 0; t < n; ++t) s += k[t] * tmp[(y + t) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.channels != 1) throw ShapeError("ssim: expects single-channel input");
  const auto win = static_cast<std::size_t>(params.window);
  if (a.height < win || a.width < win)
    throw SizeError("ssim: image smaller than " + std::to_string(win) + "x" + std::to_string(win) +
                    " window");
  const auto k = gaussian_kernel(params.window, params.sigma);
  const std::size_t h = a.height, w = a.width;
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a.data[i] * a.data[i];
    bb[i] = b.data[i] * b.data[i];
    ab[i] = a.data[i] * b.data[i];
  }
  const auto mu_a = filter_valid(a.data, h, w, k);
  const auto mu_b = filter_valid(b.data, h, w, k);
  const auto e_aa = filter_valid(aa, h, w, k);
  const auto e_bb = filter_valid(bb, h, w, k);
  const auto e_ab = filter_valid(ab, h, w, k);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double va = e_aa[i] - mu_a[i] * mu_a[i];
    const double vb = e_bb[i] - mu_b[i] * mu_b[i];
    const double cov = e_ab[i] - mu_a[i] * mu_b[i];
    const double num = (2.0 * mu_a[i] * mu_b[i] + params.c1) * (2.0 * cov + params.c2);
    const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + params.c1) * (va + vb + params.c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_a.size());
}

MetricReport fidelity_report(const Image& restored, const Image& reference) {
  const Image ya = restored.channels == 3 ? rgb_to_luminance(restored) : restored;
  const Image yb = reference.channels == 3 ? rgb_to_luminance(reference) : reference;
  MetricReport r;
  r.psnr = psnr(ya, yb);
  r.ssim = ssim(ya, yb);
  return r;
}

}  // namespace gramsr
