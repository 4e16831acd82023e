#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gramsr/config.hpp"
#include "gramsr/image.hpp"

namespace gramsr {

enum class TextureKind { sinusoid, voronoi, filtered_noise };

std::string to_string(TextureKind kind);

// One procedural RGB texture, a pure function of (kind, size, seed).
Image make_texture(TextureKind kind, std::size_t size, std::uint64_t seed);

// count textures cycling through the three kinds.
std::vector<Image> synthetic_textures(std::size_t count, std::size_t size, std::uint64_t seed);

// Every PNG/PPM/PGM file in dir, sorted by file name.
std::vector<Image> load_image_folder(const std::string& dir);

// HQ patches for a split: crops of the folder images when a directory is
// configured, otherwise synthetic textures. Throws DataError when empty.
std::vector<Image> hq_patches(const RunConfig& cfg, bool validation);

}  // namespace gramsr
