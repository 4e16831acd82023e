#include "gramsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gramsr/error.hpp"
#include "gramsr/model.hpp"

namespace gramsr {

using nlohmann::json;

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t pos, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[pos + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> tensor_bytes(const std::vector<double>& values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 8);
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 15];
  return s;
}

json history_json(const std::vector<ValidationRecord>& history) {
  json arr = json::array();
  for (const auto& r : history)
    arr.push_back({{"step", r.step},
                   {"metric", r.metric},
                   {"psnr", r.psnr},
                   {"ssim", r.ssim},
                   {"gram_distance", r.gram_distance},
                   {"perceptual", r.perceptual}});
  return arr;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.stage < 0 || ckpt.stage > 3) throw ConfigError("checkpoint stage must be 0..3");
  json tensors = json::array();
  std::vector<std::uint8_t> payload;
  for (const auto& p : ckpt.model.store.params()) {
    auto bytes = tensor_bytes(p.value);
    tensors.push_back({{"name", p.name},
                       {"group", p.group},
                       {"shape", p.shape},
                       {"offset", payload.size()},
                       {"count", p.value.size()},
                       {"fnv1a", hex64(fnv1a64(bytes))}});
    payload.insert(payload.end(), bytes.begin(), bytes.end());
  }
  json sets = json::array();
  for (const auto& s : ckpt.model.lora_sets)
    sets.push_back({{"name", s.name}, {"rank", s.rank}, {"scaling", s.scaling}, {"targets", s.targets}});
  const json manifest{
      {"format", "gramsr-checkpoint"},
      {"stage", ckpt.stage},
      {"step", ckpt.step},
      {"codec_stride", ckpt.config.codec_stride},
      {"encoders",
       {{"conditioning", to_json(ckpt.config.conditioning_encoder)}, {"gram", to_json(ckpt.config.gram_encoder)}}},
      {"config", to_json(ckpt.config)},
      {"base_frozen", ckpt.model.base_frozen},
      {"lora_sets", sets},
      {"history", history_json(ckpt.history)},
      {"tensors", tensors},
      {"payload_bytes", payload.size()},
  };
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint file");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t mlen = get_le(bytes, 12, 8);
  if (mlen > bytes.size() - 20) throw CorruptionError("checkpoint manifest truncated");
  json m;
  try {
    m = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(mlen));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint manifest unreadable: ") + e.what());
  }
  const auto payload = bytes.subspan(20 + mlen);

  Checkpoint ck;
  try {
    ck.stage = m.at("stage").get<int>();
    if (ck.stage < 0 || ck.stage > 3) throw CorruptionError("checkpoint stage out of range");
    ck.step = m.at("step").get<std::uint64_t>();
    ck.config = config_from_json(m.at("config"));
    if (m.at("codec_stride").get<std::size_t>() != ck.config.codec_stride)
      throw CorruptionError("checkpoint stride disagrees with its config");
    if (encoder_spec_from_json(m.at("encoders").at("conditioning")) != ck.config.conditioning_encoder ||
        encoder_spec_from_json(m.at("encoders").at("gram")) != ck.config.gram_encoder)
      throw CorruptionError("checkpoint encoder specs disagree with its config");
    for (const auto& r : m.at("history"))
      ck.history.push_back({r.at("step").get<std::uint64_t>(), r.at("metric").get<double>(),
                            r.at("psnr").get<double>(), r.at("ssim").get<double>(),
                            r.at("gram_distance").get<double>(), r.at("perceptual").get<double>()});

    // Rebuild the layout the config implies and fill it from the payload.
    ck.model = build_model(ck.config);
    for (const auto& s : m.at("lora_sets")) {
      const auto& set = inject_lora(ck.model, s.at("name").get<std::string>(), s.at("rank").get<std::size_t>(),
                                    s.at("targets").get<std::vector<std::string>>(), 0);
      if (set.scaling != s.at("scaling").get<double>()) throw CorruptionError("LoRA scaling mismatch");
    }
    ck.model.base_frozen = m.at("base_frozen").get<bool>();

    const auto& tensors = m.at("tensors");
    auto& params = ck.model.store.params();
    if (tensors.size() != params.size()) throw CorruptionError("checkpoint tensor count mismatch");
    if (m.at("payload_bytes").get<std::uint64_t>() != payload.size())
      throw CorruptionError("checkpoint payload size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto& p = params[i];
      const auto name = t.at("name").get<std::string>();
      if (name != p.name) throw CorruptionError("checkpoint tensor order mismatch at " + name);
      if (t.at("shape").get<ad::Shape>() != p.shape) throw CorruptionError("checkpoint shape mismatch for " + name);
      if (t.at("group").get<std::string>() != p.group) throw CorruptionError("checkpoint group mismatch for " + name);
      const auto count = t.at("count").get<std::uint64_t>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      if (count != p.value.size()) throw CorruptionError("checkpoint element count mismatch for " + name);
      if (offset > payload.size() || count * 8 > payload.size() - offset)
        throw CorruptionError("checkpoint tensor out of bounds: " + name);
      const auto block = payload.subspan(offset, count * 8);
      if (hex64(fnv1a64(block)) != t.at("fnv1a").get<std::string>())
        throw CorruptionError("checkpoint hash mismatch for " + name);
      for (std::size_t k = 0; k < count; ++k) p.value[k] = std::bit_cast<double>(get_le(block, 8 * k, 8));
    }
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint manifest invalid: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint manifest inconsistent: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace gramsr
