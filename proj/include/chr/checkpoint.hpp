#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "chr/config.hpp"
#include "chr/layers.hpp"

namespace chr {

/// Checkpoint file layout: the 8-byte magic "CHRCKPT1", a little-endian
/// uint64 header length, a JSON header (config, config hash, progress
/// counters, tensor index), then raw little-endian float32 payloads.
struct CheckpointMeta {
  FlatConfig config;
  std::string config_hash;
  std::int64_t epoch = 0;  // completed epochs
  std::int64_t step = 0;   // optimizer steps taken
};

struct CheckpointTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
};

/// Written to a temporary file and renamed, so readers never observe a partial file.
void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const std::vector<nn::Param*>& tensors);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies stored values into `targets` by name; shape mismatch or a missing
/// tensor is a ConfigError.
void restore_tensors(const Checkpoint& ckpt, const std::vector<nn::Param*>& targets);

}  // namespace chr
