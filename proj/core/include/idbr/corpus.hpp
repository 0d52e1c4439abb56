#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "idbr/rng.hpp"
#include "idbr/tokenizer.hpp"

namespace idbr {

/// One classification instance. Stored examples are canonical: `tokens`
/// never contains the separator token. The pair variants produced by
/// make_nsp_pair carry the separator plus nsp_label/split_index; canonical
/// examples keep both at -1.
struct Example {
  std::vector<int> tokens;
  std::string text;
  int label = -1;        // global class index
  int task_id = -1;      // position of the owning task in the sequence
  int nsp_label = -1;    // 0 = in-order pair, 1 = swapped pair, -1 = canonical
  int split_index = -1;  // separator insertion point, -1 = canonical
  uint64_t id = 0;       // stable: (task_id << 32) | running index
};

struct NspPair {
  Example is_next;   // x[0:split] + SEP + x[split:], label 0
  Example not_next;  // x[split:] + SEP + x[0:split], label 1
};

/// Builds the two segment-order variants of a canonical example.
/// Requires tokens.size() >= 2 and 0 < split_index < tokens.size().
NspPair make_nsp_pair(const Example& canonical, int split_index,
                      int separator_token = kSeparatorTokenId);

/// Uniform draw from the interior split positions [1, length).
int sample_split_index(Rng& rng, size_t length);

/// A (label, text) row as loaded from a dataset file or generator; the
/// label is 0-based within the dataset.
struct LabeledText {
  int label = 0;
  std::string text;
};

/// Strict reader for the `label,text` CSV interface (RFC4180-style quoting,
/// labels 1-based in the file). Throws on a missing file, malformed rows
/// (with line numbers), out-of-range labels and empty datasets.
std::vector<LabeledText> load_csv_dataset(const std::filesystem::path& path,
                                          int num_classes);

/// Class-balanced disjoint train/val split, deterministic in `seed`.
/// Throws if any class has fewer than train+val per-class examples,
/// naming the class.
struct SampledSplit {
  std::vector<LabeledText> train;
  std::vector<LabeledText> val;
};
SampledSplit subsample_split(std::span<const LabeledText> dataset,
                             int per_class_train, int per_class_val,
                             uint64_t seed);

struct TaskDescriptor {
  std::string name;
  int num_classes = 0;
  int label_offset = 0;  // start of this task's block in the global space
  std::string merge_group;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

/// Per-task entry used by merge_label_space (name + class count + group).
struct LabelSpaceEntry {
  std::string name;
  int num_classes = 0;
  std::string merge_group;  // empty = the task gets its own block
};

struct LabelSpace {
  std::map<std::string, int> offset_by_task;
  int total_classes = 0;
};

/// Assigns one label block per merge group, in order of first appearance.
/// Tasks sharing a group must declare equal class counts.
LabelSpace merge_label_space(std::span<const LabelSpaceEntry> tasks);

struct TaskSequence {
  std::string order_id;
  std::vector<TaskDescriptor> tasks;
  int total_classes = 0;
  Tokenizer tokenizer;

  size_t size() const { return tasks.size(); }
};

}  // namespace idbr
