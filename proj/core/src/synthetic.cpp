#include "idbr/synthetic.hpp"

#include <stdexcept>
#include <string>

namespace idbr {

namespace {

std::string filler_word(const SyntheticSpec& spec, size_t j) {
  if (spec.shared_vocabulary) return "sw" + std::to_string(j);
  return "t" + std::to_string(spec.vocab_block) + "w" + std::to_string(j);
}

std::string class_word(const SyntheticSpec& spec, int cls, size_t j) {
  if (spec.shared_vocabulary) {
    return "cw" + std::to_string(cls) + "k" + std::to_string(j);
  }
  return "t" + std::to_string(spec.vocab_block) + "c" + std::to_string(cls) +
         "k" + std::to_string(j);
}

std::string marker_word(const SyntheticSpec& spec, size_t j) {
  return "mk" + std::to_string(spec.vocab_block) + "j" + std::to_string(j);
}

}  // namespace

std::vector<LabeledText> generate_synthetic(const SyntheticSpec& spec,
                                            uint64_t seed, SplitKind split) {
  if (spec.num_classes < 1) {
    throw std::invalid_argument("generate_synthetic: need at least one class");
  }
  if (spec.min_length < 2 || spec.max_length < spec.min_length) {
    throw std::invalid_argument("generate_synthetic: bad length range");
  }

  int per_class = 0;
  switch (split) {
    case SplitKind::kTrain: per_class = spec.train_per_class; break;
    case SplitKind::kVal: per_class = spec.val_per_class; break;
    case SplitKind::kTest: per_class = spec.test_per_class; break;
  }

  Rng rng(derive_seed(seed, "synthetic",
                      {static_cast<uint64_t>(spec.vocab_block),
                       static_cast<uint64_t>(split)}));

  std::vector<LabeledText> out;
  out.reserve(static_cast<size_t>(per_class) * spec.num_classes);
  for (int cls = 0; cls < spec.num_classes; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      const int length =
          spec.min_length +
          static_cast<int>(rng.uniform_index(
              static_cast<size_t>(spec.max_length - spec.min_length + 1)));
      std::string text;
      for (int p = 0; p < length; ++p) {
        const double u = rng.uniform();
        std::string word;
        if (u < spec.marker_rate) {
          word = marker_word(spec, rng.uniform_index(spec.marker_words));
        } else if (u < spec.marker_rate + spec.class_word_rate) {
          word = class_word(spec, cls, rng.uniform_index(spec.class_words));
        } else {
          word = filler_word(spec, rng.uniform_index(spec.filler_words));
        }
        if (!text.empty()) text.push_back(' ');
        text += word;
      }
      out.push_back(LabeledText{cls, std::move(text)});
    }
  }
  return out;
}

}  // namespace idbr
