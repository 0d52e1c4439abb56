#pragma once

#include <cstdint>
#include <vector>

#include "idbr/corpus.hpp"

namespace idbr {

/// Parameters of a generated classification task. Each task draws words
/// from a vocabulary block; blocks with distinct indices are disjoint
/// unless shared_vocabulary is set, in which case fillers and class words
/// are common to all tasks and only low-rate marker words identify the
/// task. The shared mode makes task identity a learnable but non-trivial
/// signal, which is what representation probes need.
struct SyntheticSpec {
  int num_classes = 2;
  int train_per_class = 500;
  int val_per_class = 100;
  int test_per_class = 200;

  int vocab_block = 0;
  bool shared_vocabulary = false;
  double marker_rate = 0.0;   // per-position probability of a task marker
  double class_word_rate = 0.45;
  int filler_words = 40;
  int class_words = 6;
  int marker_words = 4;
  int min_length = 8;
  int max_length = 24;
};

enum class SplitKind { kTrain, kVal, kTest };

/// Deterministic given (spec, seed, split). Examples come out grouped by
/// class, per-class counts exactly as configured.
std::vector<LabeledText> generate_synthetic(const SyntheticSpec& spec,
                                            uint64_t seed, SplitKind split);

}  // namespace idbr
