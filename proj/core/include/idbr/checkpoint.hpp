#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "idbr/model.hpp"
#include "idbr/tokenizer.hpp"

namespace idbr {

struct CheckpointTaskInfo {
  std::string name;
  int num_classes = 0;
  int label_offset = 0;
};

struct CheckpointMeta {
  std::string method;
  uint64_t seed = 0;
  int completed_tasks = 0;
  std::string order_id;
  std::vector<CheckpointTaskInfo> tasks;
  uint64_t vocab_hash = 0;  // recomputed and verified on load
};

struct Checkpoint {
  Model model;
  Tokenizer tokenizer;
  CheckpointMeta meta;
};

/// Single-file binary checkpoint: a JSON header (model dims, vocabulary,
/// task list, seed, method) followed by every parameter tensor keyed by
/// module path, stored as raw little-endian doubles for bit-exact resume.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const Tokenizer& tokenizer, const CheckpointMeta& meta);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace idbr
