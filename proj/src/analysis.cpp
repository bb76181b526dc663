#include "orpo/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "orpo/rng.hpp"

namespace orpo {

Histogram make_histogram(std::span<const double> values, std::size_t bins) {
  if (values.empty() || bins < 1) throw std::invalid_argument("make_histogram: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) {
    h.edges.push_back(i == bins ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    std::size_t b = width > 0 ? static_cast<std::size_t>((v - lo) / width) : 0;
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

SeriesStats summarize_series(std::span<const double> values, std::size_t bins) {
  if (values.size() < 2) throw std::invalid_argument("summarize_series: need at least 2 values");
  SeriesStats s;
  const auto n = static_cast<double>(values.size());
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / (n - 1));
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  s.histogram = make_histogram(values, bins);
  return s;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  return values[static_cast<std::size_t>(std::llround(pos))];
}

RatioSamples sample_ratio_series(std::size_t n, double beta, std::uint64_t seed) {
  constexpr std::size_t kChunk = 4096;
  RatioSamples out;
  out.log_pr.reserve(n);
  out.log_or.reserve(n);
  auto logit = [](double p) { return std::log(p) - std::log1p(-p); };
  for (std::size_t start = 0, chunk = 0; start < n; start += kChunk, ++chunk) {
    Rng rng = make_rng({seed, chunk, 0x726174});
    const std::size_t end = std::min(n, start + kChunk);
    for (std::size_t i = start; i < end; ++i) {
      const double x1 = uniform_open01(rng);
      const double x2 = uniform_open01(rng);
      out.log_pr.push_back(beta * (std::log(x1) - std::log(x2)));
      out.log_or.push_back(logit(x1) - logit(x2));
    }
  }
  return out;
}

RatioStudyReport sample_ratio_distributions(std::size_t n, double beta, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("ratio study needs n >= 2");
  const auto samples = sample_ratio_series(n, beta, seed);
  return {n, beta, summarize_series(samples.log_pr), summarize_series(samples.log_or)};
}

Eigen::VectorXd embed_response(const TinyLM<double>& model, std::span<const TokenId> response) {
  if (response.empty()) throw std::invalid_argument("empty response");
  Eigen::VectorXd h = response_features<double>(model, {}, response);
  const double norm = h.norm();
  if (!(norm > 0)) throw std::runtime_error("embed_response: zero hidden state");
  return h / norm;
}

Diversity diversity_d(std::span<const Eigen::VectorXd> embeddings) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw std::invalid_argument("diversity needs at least 2 embeddings");
  double sum = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& a = embeddings[i];
      const auto& b = embeddings[j];
      sum += a.dot(b) / (a.norm() * b.norm());
    }
  }
  const auto pairs_ordered = static_cast<double>(n * (n - 1));
  return {0.5 * sum / pairs_ordered, sum / (pairs_ordered / 2.0)};
}

Diversity per_input_diversity_from_embeddings(const std::vector<std::vector<Eigen::VectorXd>>& per_prompt) {
  if (per_prompt.empty()) throw std::invalid_argument("per-input diversity: no prompts");
  Diversity mean;
  for (const auto& set : per_prompt) {
    const auto d = diversity_d(set);
    mean.literal += d.literal;
    mean.mean_cosine += d.mean_cosine;
  }
  mean.literal /= static_cast<double>(per_prompt.size());
  mean.mean_cosine /= static_cast<double>(per_prompt.size());
  return mean;
}

Diversity across_input_diversity_from_embeddings(const std::vector<std::vector<Eigen::VectorXd>>& per_prompt) {
  if (per_prompt.size() < 2) throw std::invalid_argument("across-input diversity needs at least 2 prompts");
  std::vector<Eigen::VectorXd> firsts;
  for (const auto& set : per_prompt) {
    if (set.empty()) throw std::invalid_argument("across-input diversity: prompt without samples");
    firsts.push_back(set.front());
  }
  return diversity_d(firsts);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::vector<Eigen::VectorXd>> sample_response_embeddings(const TinyLM<double>& model,
                                                                      const std::vector<Tokens>& prompts,
                                                                      const DiversitySampling& sampling,
                                                                      std::uint64_t seed) {
  if (sampling.k < 1) throw std::invalid_argument("K must be >= 1");
  std::vector<std::vector<Eigen::VectorXd>> out;
  for (const auto& prompt : prompts) {
    const std::uint64_t key = fnv1a(std::string_view(reinterpret_cast<const char*>(prompt.data()),
                                                     prompt.size() * sizeof(TokenId)));
    std::vector<Eigen::VectorXd> set;
    for (std::size_t j = 0; j < sampling.k; ++j) {
      const std::uint64_t s = make_rng({seed, key, j})();
      const auto y = generate(model, prompt, sampling.temperature, sampling.max_len, s, sampling.eos_id);
      set.push_back(embed_response(model, y));
    }
    out.push_back(std::move(set));
  }
  return out;
}

Diversity per_input_diversity(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                              const DiversitySampling& sampling, std::uint64_t seed) {
  if (sampling.k < 2) throw std::invalid_argument("per-input diversity needs K >= 2");
  return per_input_diversity_from_embeddings(sample_response_embeddings(model, prompts, sampling, seed));
}

Diversity across_input_diversity(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                                 const DiversitySampling& sampling, std::uint64_t seed) {
  DiversitySampling first_only = sampling;
  first_only.k = 1;
  return across_input_diversity_from_embeddings(sample_response_embeddings(model, prompts, first_only, seed));
}

}  // namespace orpo
