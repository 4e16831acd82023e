#include "gramsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "gramsr/error.hpp"
#include "gramsr/rng.hpp"

namespace gramsr {

void validate(const Image& img) {
  if (img.height < 1 || img.width < 1) throw ShapeError("image: empty dimensions");
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("image: channels must be 1 or 3, got " + std::to_string(img.channels));
  if (img.data.size() != img.height * img.width * img.channels)
    throw ShapeError("image: buffer size does not match dimensions");
  for (double v : img.data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw ShapeError("image: value outside [0,1]");
}

Image clip01(Image img) {
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

namespace {

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

bool is_png(std::span<const std::uint8_t> b) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return b.size() >= 8 && std::equal(sig, sig + 8, b.begin());
}

bool is_pnm(std::span<const std::uint8_t> b) {
  return b.size() >= 2 && b[0] == 'P' && (b[1] == '5' || b[1] == '6');
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  validate(img);
  std::vector<std::uint8_t> pixels(img.size());
  std::transform(img.data.begin(), img.data.end(), pixels.begin(), to_byte);

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("png encode: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr))
    throw FormatError(std::string("png encode: ") + image.message);
  out.resize(size);
  png_image_free(&image);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError(std::string("png decode: ") + image.message);
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(std::string("png decode: ") + image.message);
  }
  Image img(image.height, image.width, gray ? 1 : 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = pixels[i] / 255.0;
  return img;
}

std::vector<std::uint8_t> encode_pnm(const Image& img) {
  validate(img);
  std::ostringstream header;
  header << (img.channels == 3 ? "P6" : "P5") << "\n" << img.width << " " << img.height << "\n255\n";
  const std::string h = header.str();
  std::vector<std::uint8_t> out(h.begin(), h.end());
  out.reserve(out.size() + img.size());
  for (double v : img.data) out.push_back(to_byte(v));
  return out;
}

Image decode_pnm(std::span<const std::uint8_t> bytes) {
  if (!is_pnm(bytes)) throw FormatError("pnm: missing P5/P6 magic");
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  std::size_t pos = 2;
  auto next_token = [&]() -> std::size_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("pnm: malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  const std::size_t w = next_token();
  const std::size_t h = next_token();
  const std::size_t maxval = next_token();
  if (maxval != 255) throw FormatError("pnm: only 8-bit (maxval 255) supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("pnm: malformed header");
  ++pos;
  if (w == 0 || h == 0) throw FormatError("pnm: empty image");
  Image img(h, w, channels);
  if (bytes.size() - pos < img.size()) throw FormatError("pnm: truncated pixel data");
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = bytes[pos + i] / 255.0;
  return img;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_pnm(bytes)) return decode_pnm(bytes);
  throw FormatError("unsupported image format");
}

Image load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

void save_image(const std::filesystem::path& path, const Image& img) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png")
    write_file(path, encode_png(img));
  else if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")
    write_file(path, encode_pnm(img));
  else
    throw FormatError("unsupported output extension: " + ext);
}

Image rgb_to_luminance(const Image& img) {
  if (img.channels != 3) throw ShapeError("rgb_to_luminance: expected 3 channels");
  Image y(img.height, img.width, 1);
  for (std::size_t i = 0; i < img.height * img.width; ++i) {
    const double* p = img.data.data() + 3 * i;
    y.data[i] = std::clamp(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2], 0.0, 1.0);
  }
  return y;
}

Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  if (y + h > img.height || x + w > img.width) throw SizeError("crop: window outside image");
  Image out(h, w, img.channels);
  for (std::size_t r = 0; r < h; ++r)
    std::copy_n(img.data.begin() + ((y + r) * img.width + x) * img.channels, w * img.channels,
                out.data.begin() + r * w * img.channels);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> crop_offsets(const Image& img, std::size_t size,
                                                              std::size_t count,
                                                              std::uint64_t seed) {
  if (size == 0 || size > std::min(img.height, img.width))
    throw SizeError("crop_patches: patch size " + std::to_string(size) + " exceeds image");
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  offsets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t y = rng.below(img.height - size + 1);
    const std::size_t x = rng.below(img.width - size + 1);
    offsets.emplace_back(y, x);
  }
  return offsets;
}

std::vector<Image> crop_patches(const Image& img, std::size_t size, std::size_t count,
                                std::uint64_t seed) {
  std::vector<Image> out;
  for (auto [y, x] : crop_offsets(img, size, count, seed)) out.push_back(crop(img, y, x, size, size));
  return out;
}

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

}  // namespace

Image upsample_bicubic(const Image& img, std::size_t factor) {
  if (factor < 1) throw SizeError("upsample_bicubic: factor must be >= 1");
  const std::size_t oh = img.height * factor, ow = img.width * factor, c = img.channels;
  // Separable: rows then columns, each tap set depends only on the output phase.
  auto taps = [factor](std::size_t o, std::size_t n, std::int64_t idx[4], double wt[4]) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    for (int k = 0; k < 4; ++k) {
      const auto i = static_cast<std::int64_t>(base) - 1 + k;
      idx[k] = std::clamp<std::int64_t>(i, 0, static_cast<std::int64_t>(n) - 1);
      wt[k] = cubic_weight(frac - (k - 1));
    }
  };
  Image tmp(img.height, ow, c);
  for (std::size_t x = 0; x < ow; ++x) {
    std::int64_t idx[4];
    double wt[4];
    taps(x, img.width, idx, wt);
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (int t = 0; t < 4; ++t) s += wt[t] * img.at(y, static_cast<std::size_t>(idx[t]), k);
        tmp.at(y, x, k) = s;
      }
  }
  Image out(oh, ow, c);
  for (std::size_t y = 0; y < oh; ++y) {
    std::int64_t idx[4];
    double wt[4];
    taps(y, img.height, idx, wt);
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (int t = 0; t < 4; ++t) s += wt[t] * tmp.at(static_cast<std::size_t>(idx[t]), x, k);
        out.at(y, x, k) = s;
      }
  }
  return clip01(std::move(out));
}

Image downsample_area(const Image& img, std::size_t factor) {
  if (factor < 1 || img.height % factor || img.width % factor)
    throw SizeError("downsample_area: dimensions not divisible by " + std::to_string(factor));
  const std::size_t oh = img.height / factor, ow = img.width / factor;
  Image out(oh, ow, img.channels);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t k = 0; k < img.channels; ++k) {
        double s = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy)
          for (std::size_t dx = 0; dx < factor; ++dx) s += img.at(y * factor + dy, x * factor + dx, k);
        out.at(y, x, k) = s * inv;
      }
  return out;
}

}  // namespace gramsr
