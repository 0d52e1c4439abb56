#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace idbr {

inline constexpr int kUnknownTokenId = 0;
inline constexpr int kSeparatorTokenId = 1;
inline constexpr std::string_view kUnknownTokenText = "<unk>";
inline constexpr std::string_view kSeparatorTokenText = "<sep>";

struct TokenizerConfig {
  size_t max_vocab = 20000;  // including the two reserved ids
  size_t max_length = 256;   // truncate to the first max_length tokens
};

/// Whitespace + lowercase tokenizer with a frequency-capped vocabulary.
/// Out-of-vocabulary words map to the reserved unknown id. A pretrained
/// encoder backend can bypass this entirely by supplying its own ids.
class Tokenizer {
 public:
  Tokenizer() = default;  // empty vocabulary; fit() or from_vocab() fill it

  static Tokenizer fit(std::span<const std::string> texts,
                       const TokenizerConfig& config = {});

  /// Rebuild from a serialized vocabulary (id order, reserved ids first).
  static Tokenizer from_vocab(std::vector<std::string> words,
                              const TokenizerConfig& config = {});

  std::vector<int> encode(std::string_view text) const;

  size_t vocab_size() const { return words_.size(); }
  const std::vector<std::string>& vocab() const { return words_; }
  size_t max_length() const { return config_.max_length; }
  const TokenizerConfig& config() const { return config_; }

  /// FNV-1a over the vocabulary in id order; stored in checkpoint metadata.
  uint64_t vocab_hash() const;

  static std::vector<std::string> split_lowercase(std::string_view text);

 private:
  TokenizerConfig config_;
  std::vector<std::string> words_;              // id -> word
  std::unordered_map<std::string, int> ids_;    // word -> id
};

}  // namespace idbr
