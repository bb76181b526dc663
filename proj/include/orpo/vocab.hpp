#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace orpo {

using TokenId = std::int32_t;
using Tokens = std::vector<TokenId>;

enum class Tokenization { kWhitespace, kCharacter };

/// Dense token table. Content tokens come first in first-occurrence order,
/// followed by <unk>, <pad>, <eos>.
class Vocab {
 public:
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kPad = "<pad>";
  static constexpr std::string_view kEos = "<eos>";

  Vocab() = default;
  Vocab(std::vector<std::string> content_tokens, Tokenization mode);

  TokenId lookup(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  std::size_t size() const { return tokens_.size(); }
  TokenId unk_id() const { return unk_id_; }
  TokenId pad_id() const { return pad_id_; }
  TokenId eos_id() const { return eos_id_; }
  Tokenization mode() const { return mode_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_id_ = 0;
  TokenId pad_id_ = 0;
  TokenId eos_id_ = 0;
  Tokenization mode_ = Tokenization::kWhitespace;
};

/// Splits text into token strings according to the tokenization mode.
std::vector<std::string> split_tokens(std::string_view text, Tokenization mode);

/// Every token occurring at least `min_count` times gets an id.
/// Throws std::invalid_argument("empty corpus") when `corpus` is empty.
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count = 1,
                  Tokenization mode = Tokenization::kWhitespace);

Tokens tokenize(const Vocab& vocab, std::string_view text, bool append_eos = false);

std::string detokenize(const Vocab& vocab, const Tokens& ids);

}  // namespace orpo
