#include "gramsr/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

struct Palette {
  double a[3], b[3];
};

Palette random_palette(Rng& rng) {
  Palette p;
  for (int c = 0; c < 3; ++c) {
    p.a[c] = rng.uniform(0.05, 0.5);
    p.b[c] = rng.uniform(0.5, 0.95);
  }
  return p;
}

void paint(Image& img, std::size_t y, std::size_t x, double t, const Palette& p) {
  t = std::clamp(t, 0.0, 1.0);
  for (int c = 0; c < 3; ++c) img.at(y, x, c) = p.a[c] + (p.b[c] - p.a[c]) * t;
}

Image sinusoid(std::size_t n, Rng& rng) {
  const Palette pal = random_palette(rng);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves(3);
  for (auto& w : waves) {
    const double freq = rng.uniform(2.0, 10.0);
    const double ang = rng.uniform(0.0, kTau);
    w = {freq * std::cos(ang), freq * std::sin(ang), rng.uniform(0.0, kTau), rng.uniform(0.3, 1.0)};
  }
  double total = 0.0;
  for (const auto& w : waves) total += w.amp;
  Image img(n, n, 3);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double v = 0.0;
      for (const auto& w : waves)
        v += w.amp * std::sin(kTau * (w.fx * x + w.fy * y) / static_cast<double>(n) + w.phase);
      paint(img, y, x, 0.5 + 0.5 * v / total, pal);
    }
  return img;
}

Image voronoi(std::size_t n, Rng& rng) {
  const std::size_t cells = 6 + rng.below(10);
  std::vector<double> cy(cells), cx(cells), shade(cells * 3);
  for (std::size_t k = 0; k < cells; ++k) {
    cy[k] = rng.uniform(0.0, static_cast<double>(n));
    cx[k] = rng.uniform(0.0, static_cast<double>(n));
    for (int c = 0; c < 3; ++c) shade[k * 3 + c] = rng.uniform(0.1, 0.9);
  }
  const double edge = rng.uniform(0.5, 2.0);
  Image img(n, n, 3);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double d1 = 1e300, d2 = 1e300;
      std::size_t best = 0;
      for (std::size_t k = 0; k < cells; ++k) {
        // toroidal distance so the texture tiles
        double dy = std::fabs(y + 0.5 - cy[k]), dx = std::fabs(x + 0.5 - cx[k]);
        dy = std::min(dy, n - dy);
        dx = std::min(dx, n - dx);
        const double d = std::sqrt(dy * dy + dx * dx);
        if (d < d1) {
          d2 = d1;
          d1 = d;
          best = k;
        } else if (d < d2) {
          d2 = d;
        }
      }
      const double border = std::min(1.0, (d2 - d1) / edge);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(shade[best * 3 + c] * border, 0.0, 1.0);
    }
  return img;
}

Image filtered_noise(std::size_t n, Rng& rng) {
  const Palette pal = random_palette(rng);
  // Sum of bilinearly interpolated lattice noise at a few octaves.
  Image img(n, n, 3);
  std::vector<double> acc(n * n, 0.0);
  double norm = 0.0;
  for (std::size_t cellsz = n / 4, oct = 0; cellsz >= 2 && oct < 4; cellsz /= 2, ++oct) {
    const std::size_t g = n / cellsz;
    std::vector<double> lattice(g * g);
    for (auto& v : lattice) v = rng.uniform();
    const double amp = 1.0 / static_cast<double>(1u << oct);
    norm += amp;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double fy = static_cast<double>(y) / cellsz, fx = static_cast<double>(x) / cellsz;
        const std::size_t y0 = static_cast<std::size_t>(fy) % g, x0 = static_cast<std::size_t>(fx) % g;
        const std::size_t y1 = (y0 + 1) % g, x1 = (x0 + 1) % g;
        const double ty = fy - std::floor(fy), tx = fx - std::floor(fx);
        const double top = lattice[y0 * g + x0] * (1 - tx) + lattice[y0 * g + x1] * tx;
        const double bot = lattice[y1 * g + x0] * (1 - tx) + lattice[y1 * g + x1] * tx;
        acc[y * n + x] += amp * (top * (1 - ty) + bot * ty);
      }
  }
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) paint(img, y, x, acc[y * n + x] / norm, pal);
  return img;
}

}  // namespace

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::sinusoid: return "sinusoid";
    case TextureKind::voronoi: return "voronoi";
    case TextureKind::filtered_noise: return "filtered_noise";
  }
  return "?";
}

Image make_texture(TextureKind kind, std::size_t size, std::uint64_t seed) {
  if (size < 8) throw SizeError("make_texture: size must be >= 8");
  Rng rng(seed);
  switch (kind) {
    case TextureKind::sinusoid: return sinusoid(size, rng);
    case TextureKind::voronoi: return voronoi(size, rng);
    case TextureKind::filtered_noise: return filtered_noise(size, rng);
  }
  throw ConfigError("make_texture: unknown kind");
}

std::vector<Image> synthetic_textures(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  Rng seeds(seed);
  for (std::size_t i = 0; i < count; ++i)
    out.push_back(make_texture(static_cast<TextureKind>(i % 3), size, seeds.next_u64()));
  return out;
}

std::vector<Image> load_image_folder(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Image> out;
  for (const auto& f : files) out.push_back(load_image(f));
  return out;
}

std::vector<Image> hq_patches(const RunConfig& cfg, bool validation) {
  const std::string& dir = validation ? cfg.val_dir : cfg.train_dir;
  // Distinct generator streams for the two splits.
  const std::uint64_t seed = cfg.seeds.data * 2 + (validation ? 1 : 0);
  std::vector<Image> out;
  if (dir.empty()) {
    out = synthetic_textures(validation ? cfg.synthetic_val_count : cfg.synthetic_train_count, cfg.patch_size,
                             seed);
  } else {
    const auto images = load_image_folder(dir);
    Rng rng(seed);
    for (const auto& img : images) {
      Image rgb = img;
      if (img.channels == 1) {
        rgb = Image(img.height, img.width, 3);
        for (std::size_t i = 0; i < img.size(); ++i)
          for (int c = 0; c < 3; ++c) rgb.data[i * 3 + c] = img.data[i];
      }
      if (rgb.height < cfg.patch_size || rgb.width < cfg.patch_size) continue;
      for (auto& p : crop_patches(rgb, cfg.patch_size, cfg.patches_per_image, rng.next_u64()))
        out.push_back(std::move(p));
    }
  }
  if (out.empty()) throw DataError(std::string(validation ? "validation" : "training") + " corpus is empty");
  return out;
}

}  // namespace gramsr
