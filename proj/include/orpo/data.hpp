#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "orpo/vocab.hpp"

namespace orpo {

struct RawTriple {
  std::string prompt;
  std::string chosen;
  std::string rejected;

  bool operator==(const RawTriple&) const = default;
};

struct PreferenceTriple {
  Tokens x;
  Tokens y_w;  // eos-terminated
  Tokens y_l;  // eos-terminated

  bool operator==(const PreferenceTriple&) const = default;
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<RawTriple> rows;
  std::vector<LineError> errors;
  std::vector<std::string> warnings;
};

/// One JSON object per line with string fields prompt / chosen / rejected.
/// Malformed lines are recorded and skipped; an unreadable file throws.
LoadResult load_jsonl(const std::filesystem::path& path);

void write_jsonl(const std::vector<RawTriple>& rows, const std::filesystem::path& path);

struct DropStats {
  std::size_t identical = 0;
  std::size_t empty = 0;
  std::size_t too_long = 0;
  std::size_t kept = 0;

  std::size_t total() const { return identical + empty + too_long + kept; }
  bool operator==(const DropStats&) const = default;
};

struct FilterOptions {
  std::size_t prompt_cap = 128;  // prompts with more tokens are dropped
  std::size_t max_len = 64;      // responses truncated to this many tokens, eos included
};

struct FilterResult {
  std::vector<PreferenceTriple> triples;
  std::vector<RawTriple> kept_rows;  // raw rows behind `triples`, same order
  DropStats stats;
};

/// Drops pairs whose responses are identical, empty, or whose prompt exceeds
/// the cap. Identity is checked on raw strings and again after tokenization
/// and truncation, so every kept triple has y_w != y_l.
FilterResult filter_and_tokenize(const std::vector<RawTriple>& rows, const Vocab& vocab,
                                 const FilterOptions& opts = {});

struct DatasetSplit {
  std::vector<PreferenceTriple> train;
  std::vector<PreferenceTriple> eval;
  std::vector<PreferenceTriple> test;
  std::uint64_t seed = 0;
  DropStats stats;
};

/// Seeded shuffle, then contiguous cut into train / eval / test.
DatasetSplit split(const std::vector<PreferenceTriple>& dataset, std::array<double, 3> fractions,
                   std::uint64_t seed);

/// Index batches for one epoch; the order is a pure function of (seed, epoch).
/// The final short batch is kept.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n_rows, std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch);

inline constexpr const char* kChosenMarker = "polite:";
inline constexpr const char* kRejectedMarker = "rude:";

/// Template corpus with a learnable preference. Chosen responses open with
/// kChosenMarker and mostly use "good" content words; rejected responses open
/// with kRejectedMarker and mostly use "bad" ones. Both share topic words and
/// the two word pools, so fitting the chosen side also lifts the rejected side.
std::vector<RawTriple> make_synthetic_corpus(std::size_t n, std::uint64_t seed);

/// All text fields, for vocabulary construction.
std::vector<std::string> corpus_texts(const std::vector<RawTriple>& rows);

}  // namespace orpo
