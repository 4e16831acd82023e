#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gramsr/config.hpp"
#include "gramsr/denoiser.hpp"

namespace gramsr {

struct ValidationRecord {
  std::uint64_t step = 0;
  // lambda4 * gram_distance + lambda2 * perceptual, the stage-3 early-stop
  // criterion.
  double metric = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double gram_distance = 0.0;
  double perceptual = 0.0;

  friend bool operator==(const ValidationRecord&, const ValidationRecord&) = default;
};

// Stage id, every model parameter (base, adapter, LoRA sets, conditioning
// block), the run config (which carries the encoder specs) and training
// bookkeeping.
struct Checkpoint {
  int stage = 0;
  RunConfig config;
  DenoiserParams model;
  std::uint64_t step = 0;
  std::vector<ValidationRecord> history;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr char kCheckpointMagic[8] = {'G', 'R', 'A', 'M', 'S', 'R', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: magic, u32 version, u64 manifest length, JSON manifest, then every
// tensor as little-endian f64 in manifest order.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Trainability flags are training-time state and are not stored: a loaded
// checkpoint has every group frozen.
// Throws FormatError on a malformed container and CorruptionError when the
// manifest disagrees with the payload or with the layout implied by the
// config.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace gramsr
