#pragma once

// Versioned binary checkpoint container. Byte layout: docs/checkpoint-format.md.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cah/models.hpp"

namespace cah {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'A', 'H', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  /// Ordered key/value metadata: model configuration plus run information.
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Model configuration and inference options as metadata entries.
std::map<std::string, std::string> model_metadata(const ModelConfig& config, const ForwardOptions& options);

/// `extra` metadata is merged in; model keys win on conflict.
void save_model(const std::filesystem::path& path, const Model& model, const ForwardOptions& options,
                const std::map<std::string, std::string>& extra = {});

struct LoadedModel {
  Model model;
  ForwardOptions options;
  std::map<std::string, std::string> metadata;
};

/// Rebuilds the configuration from metadata and checks every tensor's name and shape.
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace cah
