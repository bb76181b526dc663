#include "orpo/vocab.hpp"

#include <map>
#include <stdexcept>

namespace orpo {

Vocab::Vocab(std::vector<std::string> content_tokens, Tokenization mode)
    : tokens_(std::move(content_tokens)), mode_(mode) {
  for (std::string_view special : {kUnk, kPad, kEos}) tokens_.emplace_back(special);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate token: " + tokens_[i]);
    }
  }
  const auto n = static_cast<TokenId>(tokens_.size());
  unk_id_ = n - 3;
  pad_id_ = n - 2;
  eos_id_ = n - 1;
}

TokenId Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id_ : it->second;
}

std::vector<std::string> split_tokens(std::string_view text, Tokenization mode) {
  std::vector<std::string> out;
  if (mode == Tokenization::kCharacter) {
    for (char c : text) out.emplace_back(1, c);
    return out;
  }
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_count, Tokenization mode) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  std::vector<std::string> order;
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& tok : split_tokens(text, mode)) {
      if (tok == Vocab::kUnk || tok == Vocab::kPad || tok == Vocab::kEos) continue;
      if (counts[tok]++ == 0) order.push_back(tok);
    }
  }
  std::vector<std::string> kept;
  for (auto& tok : order) {
    if (counts[tok] >= min_count) kept.push_back(std::move(tok));
  }
  return Vocab(std::move(kept), mode);
}

Tokens tokenize(const Vocab& vocab, std::string_view text, bool append_eos) {
  Tokens ids;
  for (const auto& tok : split_tokens(text, vocab.mode())) ids.push_back(vocab.lookup(tok));
  if (append_eos) ids.push_back(vocab.eos_id());
  return ids;
}

std::string detokenize(const Vocab& vocab, const Tokens& ids) {
  std::string out;
  const char* sep = vocab.mode() == Tokenization::kWhitespace ? " " : "";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += sep;
    out += vocab.token(ids[i]);
  }
  return out;
}

}  // namespace orpo
