#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace gramsr {

// H x W x C raster, interleaved (HWC) storage, values in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), data(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// Throws ShapeError unless dimensions are valid, channels in {1,3}, and every
// value is finite and within [0, 1].
void validate(const Image& img);

Image clip01(Image img);

// PNG or binary PPM/PGM (P6/P5), 8-bit. Format is sniffed from the content.
Image load_image(const std::filesystem::path& path);
// Writes PNG for .png, PPM/PGM for .ppm/.pgm/.pnm; values are clipped and
// rounded to 8 bits.
void save_image(const std::filesystem::path& path, const Image& img);

std::vector<std::uint8_t> encode_png(const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pnm(const Image& img);
Image decode_pnm(std::span<const std::uint8_t> bytes);
// Dispatches on magic bytes.
Image decode_image(std::span<const std::uint8_t> bytes);

// BT.601 full-range Y plane, clipped to [0, 1].
Image rgb_to_luminance(const Image& img);

// Random square crops that lie fully inside the image, deterministic in seed.
std::vector<Image> crop_patches(const Image& img, std::size_t size, std::size_t count,
                                std::uint64_t seed);
// The (y, x) offsets crop_patches would draw.
std::vector<std::pair<std::size_t, std::size_t>> crop_offsets(const Image& img, std::size_t size,
                                                              std::size_t count,
                                                              std::uint64_t seed);

Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);

// Bicubic (Keys, a = -0.5) upsampling by an integer factor with half-pixel
// centres and edge clamping. Output is clipped to [0, 1].
Image upsample_bicubic(const Image& img, std::size_t factor);

// Box-filter downsampling by an integer factor.
Image downsample_area(const Image& img, std::size_t factor);

}  // namespace gramsr
