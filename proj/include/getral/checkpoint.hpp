#pragma once

// Binary checkpoint layout (all integers little-endian):
//   "GTRL" | version u32 | metadata length u32 | metadata JSON bytes |
//   records until end of file, each:
//     name length u32 | UTF-8 name | rank u32 | dims u64 x rank | f32 payload (row-major)

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "getral/config.hpp"
#include "getral/model.hpp"

namespace getral {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  using Error::Error;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
/// Throws CheckpointError on a bad magic, an unknown version or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Everything needed to rebuild a trained model.
struct ModelBundle {
  TrainConfig config;
  Lexicon lexicon;
  ModelParams params;
  nlohmann::json metric = nlohmann::json::object();
};

void save_model(const std::filesystem::path& path, ModelBundle& bundle);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace getral
