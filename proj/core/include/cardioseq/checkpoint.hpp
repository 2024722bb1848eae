#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cardioseq/error.hpp"
#include "cardioseq/model.hpp"
#include "cardioseq/optimizer.hpp"
#include "cardioseq/tensor_io.hpp"

namespace cardioseq {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind { io, bad_magic, version, truncated, checksum, digest, inventory };

class CheckpointError : public DataError {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& message) : DataError(message), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

/// File layout (little-endian): "CSCK", u32 version, u64-length-prefixed
/// model configuration text, u64 configuration digest, u64 epoch, u64 Adam
/// step, u64 entry count, then per entry a length-prefixed name and a
/// length-prefixed raw tensor. A trailing u64 FNV-1a checksum covers every
/// preceding byte. Optimizer moments are stored as `adam.m/<name>` and
/// `adam.v/<name>`.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t epoch = 0;
  std::uint64_t adam_steps = 0;
  std::vector<std::pair<std::string, RawTensor>> entries;

  /// Entry names not starting with "adam.".
  std::vector<std::string> parameter_names() const;
};

Checkpoint make_checkpoint(const SegNet<float>& model, const Adam<float>* optimizer, std::uint64_t epoch);

/// Copies parameters (and optimizer state when `optimizer` is given) into
/// `model`. Throws CheckpointError(digest) when the model configuration
/// differs and CheckpointError(inventory) on missing or mis-shaped entries.
void restore_checkpoint(const Checkpoint& checkpoint, const SegNet<float>& model, Adam<float>* optimizer = nullptr);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cardioseq
