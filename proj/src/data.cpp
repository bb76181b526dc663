#include "orpo/data.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "orpo/rng.hpp"

namespace orpo {

LoadResult load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto obj = nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (obj.is_discarded() || !obj.is_object()) {
      result.errors.push_back({line_no, "invalid JSON object"});
      continue;
    }
    RawTriple row;
    bool ok = true;
    for (auto [key, field] : {std::pair{"prompt", &row.prompt}, std::pair{"chosen", &row.chosen},
                              std::pair{"rejected", &row.rejected}}) {
      auto it = obj.find(key);
      if (it == obj.end() || !it->is_string()) {
        result.errors.push_back({line_no, std::string("missing or non-string field '") + key + "'"});
        ok = false;
        break;
      }
      *field = it->get<std::string>();
    }
    if (ok) result.rows.push_back(std::move(row));
  }
  if (line_no == 0) result.warnings.push_back("empty file: " + path.string());
  return result;
}

void write_jsonl(const std::vector<RawTriple>& rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) {
    out << nlohmann::json{{"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected}}.dump() << '\n';
  }
}

FilterResult filter_and_tokenize(const std::vector<RawTriple>& rows, const Vocab& vocab, const FilterOptions& opts) {
  if (opts.max_len < 2) throw std::invalid_argument("max_len must leave room for one token plus eos");
  FilterResult out;
  auto response = [&](const std::string& text) {
    Tokens ids = tokenize(vocab, text);
    if (ids.empty()) return ids;
    if (ids.size() > opts.max_len - 1) ids.resize(opts.max_len - 1);
    ids.push_back(vocab.eos_id());
    return ids;
  };
  for (const auto& row : rows) {
    if (row.chosen == row.rejected) {
      ++out.stats.identical;
      continue;
    }
    PreferenceTriple t{tokenize(vocab, row.prompt), response(row.chosen), response(row.rejected)};
    if (t.y_w.empty() || t.y_l.empty()) {
      ++out.stats.empty;
    } else if (t.y_w == t.y_l) {
      ++out.stats.identical;
    } else if (t.x.size() > opts.prompt_cap) {
      ++out.stats.too_long;
    } else {
      ++out.stats.kept;
      out.triples.push_back(std::move(t));
      out.kept_rows.push_back(row);
    }
  }
  return out;
}

DatasetSplit split(const std::vector<PreferenceTriple>& dataset, std::array<double, 3> fractions, std::uint64_t seed) {
  double sum = 0;
  for (double f : fractions) {
    if (!(f > 0)) throw std::invalid_argument("split fractions must be positive");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  const std::size_t n = dataset.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_eval = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
  if (n_train == 0 || n_eval == 0 || n_train + n_eval >= n) {
    throw std::invalid_argument("split: a partition would be empty for " + std::to_string(n) + " rows");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng({seed, 0x73706c});
  shuffle(order, rng);
  DatasetSplit s;
  s.seed = seed;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? s.train : (i < n_train + n_eval ? s.eval : s.test);
    dst.push_back(dataset[order[i]]);
  }
  return s;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n_rows, std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng({seed, epoch, 0x626174});
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n_rows; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n_rows, i + batch_size)));
  }
  return batches;
}

namespace {

constexpr const char* kTopics[] = {"weather", "music", "food", "travel", "sport", "books"};
constexpr const char* kGood[] = {"kindly", "thanks", "gladly", "please", "warmly", "happy"};
constexpr const char* kBad[] = {"whatever", "ugh", "no", "stupid", "boring", "never"};
constexpr double kStyleFidelity = 0.7;  // chance a content word matches the response style

template <std::size_t N>
const char* pick(Rng& rng, const char* const (&pool)[N]) {
  return pool[uniform_index(rng, N)];
}

}  // namespace

std::vector<RawTriple> make_synthetic_corpus(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("corpus size must be >= 1");
  Rng rng = make_rng({seed, 0x73796e});
  std::vector<RawTriple> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string topic = pick(rng, kTopics);
    auto response = [&](const char* marker, bool polite) {
      std::string text = std::string(marker) + " " + topic;
      const std::size_t words = 7 + uniform_index(rng, 4);
      for (std::size_t k = 0; k < words; ++k) {
        const bool on_style = uniform_open01(rng) < kStyleFidelity;
        text += k == 0 ? " " : " and ";
        text += (on_style == polite) ? pick(rng, kGood) : pick(rng, kBad);
      }
      return text;
    };
    RawTriple row;
    row.prompt = "tell me about " + topic;
    row.chosen = response(kChosenMarker, true);
    row.rejected = response(kRejectedMarker, false);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::string> corpus_texts(const std::vector<RawTriple>& rows) {
  std::vector<std::string> texts;
  texts.reserve(3 * rows.size());
  for (const auto& r : rows) {
    texts.push_back(r.prompt);
    texts.push_back(r.chosen);
    texts.push_back(r.rejected);
  }
  return texts;
}

}  // namespace orpo
