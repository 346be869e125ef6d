#include "sardd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "sardd/errors.hpp"

namespace sardd {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'R', 'D', 'D', 'P', 'M', '\0'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void encode_f32(float value, unsigned char out[4]) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out[i] = static_cast<unsigned char>(bits >> (8 * i));
}

float decode_f32(const unsigned char in[4]) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

nlohmann::json to_json(const PredictorConfig& config) {
  return {{"image_size", config.image_size},
          {"base_channels", config.base_channels},
          {"channel_mult", config.channel_mult},
          {"res_blocks", config.res_blocks},
          {"attention_resolutions", config.attention_resolutions},
          {"time_embed_dim", config.time_embed_dim},
          {"groups", config.groups}};
}

PredictorConfig predictor_config_from_json(const nlohmann::json& j) {
  PredictorConfig c = desk_config();
  if (!j.is_object()) throw FormatError("predictor config must be a JSON object");
  try {
    c.image_size = j.value("image_size", c.image_size);
    c.base_channels = j.value("base_channels", c.base_channels);
    c.channel_mult = j.value("channel_mult", c.channel_mult);
    c.res_blocks = j.value("res_blocks", c.res_blocks);
    c.attention_resolutions = j.value("attention_resolutions", c.attention_resolutions);
    c.time_embed_dim = j.value("time_embed_dim", c.time_embed_dim);
    c.groups = j.value("groups", c.groups);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("predictor config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_params(ckpt.params, ckpt.config);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, shape] : parameter_layout(ckpt.config)) {
    const std::uint64_t count = ckpt.params.at(name).numel();
    tensors.push_back({{"name", name}, {"shape", shape}, {"offset", offset}, {"count", count}});
    offset += 4 * count;
  }
  const nlohmann::json manifest{{"format_version", kCheckpointVersion},
                                {"config", to_json(ckpt.config)},
                                {"schedule",
                                 {{"steps", ckpt.steps},
                                  {"beta_start", ckpt.beta_start},
                                  {"beta_end", ckpt.beta_end}}},
                                {"iteration", ckpt.iteration},
                                {"tensors", tensors},
                                {"payload_bytes", offset}};
  const std::string text = manifest.dump();

  std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
  put_u64(bytes, text.size());
  bytes.insert(bytes.end(), text.begin(), text.end());
  const std::size_t payload_start = bytes.size();
  bytes.resize(payload_start + offset);
  unsigned char* p = bytes.data() + payload_start;
  for (const auto& [name, shape] : parameter_layout(ckpt.config)) {
    for (float v : ckpt.params.at(name).data()) {
      encode_f32(v, p);
      p += 4;
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("no such file: " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  const std::string where = " in " + path.string();
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw CorruptionError("not a checkpoint (bad header)" + where);
  }
  const std::uint64_t manifest_len = get_u64(bytes.data() + 8);
  if (manifest_len > bytes.size() - 16) throw CorruptionError("truncated manifest" + where);

  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin() + 16,
                              bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("unreadable manifest") + where + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw VersionError("checkpoint format version " + std::to_string(version) +
                         " not supported (expected " + std::to_string(kCheckpointVersion) + ")" +
                         where);
    }
    ckpt.config = predictor_config_from_json(m.at("config"));
    ckpt.steps = m.at("schedule").at("steps").get<int>();
    ckpt.beta_start = m.at("schedule").at("beta_start").get<double>();
    ckpt.beta_end = m.at("schedule").at("beta_end").get<double>();
    ckpt.iteration = m.at("iteration").get<std::int64_t>();

    const std::uint64_t payload_bytes = m.at("payload_bytes").get<std::uint64_t>();
    const std::size_t payload_start = 16 + manifest_len;
    if (bytes.size() - payload_start != payload_bytes) {
      throw CorruptionError("payload is " + std::to_string(bytes.size() - payload_start) +
                            " bytes, manifest says " + std::to_string(payload_bytes) + where);
    }
    for (const auto& entry : m.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto count = entry.at("count").get<std::uint64_t>();
      if (shape_numel(shape) != count || offset % 4 != 0 || offset > payload_bytes ||
          count > (payload_bytes - offset) / 4) {
        throw CorruptionError("tensor '" + name + "' does not fit the payload" + where);
      }
      std::vector<float> values(count);
      const unsigned char* p = bytes.data() + payload_start + offset;
      for (std::size_t i = 0; i < count; ++i) values[i] = decode_f32(p + 4 * i);
      if (!ckpt.params.emplace(name, Tensor<float>(shape, std::move(values))).second) {
        throw CorruptionError("duplicate tensor '" + name + "'" + where);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("malformed manifest") + where + ": " + e.what());
  }
  check_params(ckpt.params, ckpt.config);
  return ckpt;
}

}  // namespace sardd
