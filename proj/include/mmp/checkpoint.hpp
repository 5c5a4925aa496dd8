#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mmp/config.hpp"
#include "mmp/encoders.hpp"

namespace mmp {

inline constexpr std::string_view kCheckpointMagic = "MMPCKPT";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  ModelParameters params;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

/// Text form: "MMPCKPT v1", header lines, then per parameter a
/// "name<TAB>d0,d1" line and a line of row-major values at 9 significant
/// digits.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(const std::string& text, const std::string& source = "checkpoint");

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws IoError when the file is missing, FormatError when it is corrupt.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError naming both values of the first architectural field
/// that differs (freeze_below is not architectural).
void require_compatible(const ModelConfig& expected, const ModelConfig& actual);

std::string model_config_json(const ModelConfig& config);

}  // namespace mmp
