#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agrav/attacks.hpp"
#include "agrav/data.hpp"
#include "agrav/gravity.hpp"
#include "agrav/model.hpp"

namespace agrav {

inline constexpr const char* kToolVersion = "agrav 0.1.0";

/// Where samples come from: an IDX image/label pair on disk, or generated
/// Gaussian blobs.
struct DatasetBlock {
  std::string kind;  // "idx" | "blobs"
  std::filesystem::path images;
  std::filesystem::path labels;
  BlobSpec blobs;
  Index train_samples = 0;
  Index eval_samples = 0;
};

/// Architecture selector; dimensions that depend on the dataset (input
/// shape, class count) are resolved when the model is built.
struct ModelBlock {
  std::string kind;  // "lenet" | "mlp"
  std::string name;
  std::vector<Index> hidden;  // mlp only
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetBlock dataset;
  ModelBlock model;
  std::optional<ModelBlock> substitute;  // black-box crafter
  GravityConfig gravity;
  Index baseline_epochs = 3;
  std::vector<AttackSpec> attacks;
  /// Checkpoint evaluated by the attack commands; empty means "the selected
  /// iteration if a selection exists, else the baseline".
  std::string attack_checkpoint;
  std::filesystem::path output_dir = "out";
  /// Reparsed canonical form (sorted keys, normalized whitespace); feeds the
  /// config hash so formatting changes never alter it.
  nlohmann::json canonical;
};

/// Parses and validates a config file. Errors are ConfigError with the
/// offending field path in the message; a missing seed is an error (no
/// implicit nondeterminism).
ExperimentConfig load_config(const std::filesystem::path& file);

std::uint64_t config_hash(const ExperimentConfig& config);

/// Loads/generates the dataset block and applies the stratified split.
SplitDataset load_split(const ExperimentConfig& config);

/// Resolves a ModelBlock against the dataset's sample shape and class count.
ModelSpec resolve_model_spec(const ModelBlock& block, const Dataset& ds);

/// fnv1a-64 over the file's bytes, hex-encoded.
std::string file_checksum(const std::filesystem::path& file);

/// Writes manifest_<command>.json: config hash, tool version, timestamp, and
/// every produced file with its checksum (the manifest lists the other
/// outputs, never itself).
void write_manifest(const std::filesystem::path& out_dir,
                    const std::string& command, const ExperimentConfig& config,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace agrav
