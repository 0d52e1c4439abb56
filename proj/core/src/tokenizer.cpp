#include "idbr/tokenizer.hpp"

#include <algorithm>
#include <cctype>

#include "idbr/rng.hpp"

namespace idbr {

std::vector<std::string> Tokenizer::split_lowercase(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!word.empty()) {
        out.push_back(std::move(word));
        word.clear();
      }
    } else {
      word.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

Tokenizer Tokenizer::fit(std::span<const std::string> texts,
                         const TokenizerConfig& config) {
  std::unordered_map<std::string, int64_t> counts;
  for (const std::string& text : texts) {
    for (std::string& w : split_lowercase(text)) {
      if (w == kUnknownTokenText || w == kSeparatorTokenText) continue;
      ++counts[std::move(w)];
    }
  }

  std::vector<std::pair<std::string, int64_t>> ranked(counts.begin(),
                                                      counts.end());
  // Frequency descending, then lexicographic: deterministic vocabulary.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  const size_t budget =
      config.max_vocab > 2 ? config.max_vocab - 2 : size_t{0};
  std::vector<std::string> words;
  words.reserve(std::min(budget, ranked.size()) + 2);
  words.emplace_back(kUnknownTokenText);
  words.emplace_back(kSeparatorTokenText);
  for (size_t i = 0; i < ranked.size() && i < budget; ++i) {
    words.push_back(std::move(ranked[i].first));
  }
  return from_vocab(std::move(words), config);
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> words,
                                const TokenizerConfig& config) {
  Tokenizer t;
  t.config_ = config;
  t.words_ = std::move(words);
  t.ids_.reserve(t.words_.size());
  for (size_t i = 0; i < t.words_.size(); ++i) {
    t.ids_.emplace(t.words_[i], static_cast<int>(i));
  }
  return t;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& w : split_lowercase(text)) {
    if (ids.size() >= config_.max_length) break;
    auto it = ids_.find(w);
    ids.push_back(it == ids_.end() ? kUnknownTokenId : it->second);
  }
  return ids;
}

uint64_t Tokenizer::vocab_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& w : words_) {
    h = mix64(h ^ fnv1a64(w));
  }
  return h;
}

}  // namespace idbr
