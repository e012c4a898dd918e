#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "firesense/data.hpp"
#include "firesense/model.hpp"
#include "firesense/train.hpp"

namespace firesense {

struct NamedBlob {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedBlob&, const NamedBlob&) = default;
};

// "FSCK" little-endian container:
//   magic | u16 version | config echo (u32 length + text)
//   model config | preprocessor | parameter blobs | buffer blobs
//   u8 has_train_state [ | train state ]
struct Checkpoint {
  ModelConfig model;
  Preprocessor preprocessor;
  std::vector<NamedBlob> params;
  std::vector<NamedBlob> buffers;
  std::optional<TrainState> train;
  std::string config_echo;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

Checkpoint capture(Model<float>& model, const Preprocessor& pre, const TrainState* state = nullptr,
                   std::string config_echo = {});

/// Copies parameters and buffers into an already-built model with the same layout.
void restore(const Checkpoint& ckpt, Model<float>& model);

/// Builds the architecture from the stored config and loads the stored weights.
Model<float> instantiate(const Checkpoint& ckpt);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on bad magic/version, truncated or inconsistent blobs.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace firesense
