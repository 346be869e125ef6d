#pragma once

// Checkpoint file layout:
//   8 bytes   magic "SARDDPM\0"
//   8 bytes   manifest length n, little-endian
//   n bytes   JSON manifest: format_version, predictor config, schedule,
//             iteration, tensors [{name, shape, offset, count}], payload_bytes
//   payload   every tensor as little-endian float32, at its manifest offset

#include <cstdint>
#include <filesystem>

#include "json.hpp"

#include "sardd/adam.hpp"
#include "sardd/predictor.hpp"

namespace sardd {

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  PredictorConfig config;
  int steps = 100;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::int64_t iteration = 0;
  ParamMap<float> params;
};

nlohmann::json to_json(const PredictorConfig& config);
// Missing keys keep their desk_config() value; validates the result.
PredictorConfig predictor_config_from_json(const nlohmann::json& j);

// Requires a complete parameter map for `config`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

// Nothing is returned unless the whole file checks out: VersionError for an
// unknown format version, CorruptionError for a bad magic, manifest, or payload
// length, DimensionError when a tensor disagrees with the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Little-endian float32 encoding used by the payload.
void encode_f32(float value, unsigned char out[4]);
float decode_f32(const unsigned char in[4]);

}  // namespace sardd
