#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "orpo/lm.hpp"

namespace orpo {

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges over [min, max]
  std::vector<std::size_t> counts;
};

Histogram make_histogram(std::span<const double> values, std::size_t bins = 200);

struct SeriesStats {
  double mean = 0;
  double std = 0;  // sample standard deviation
  double min = 0;
  double max = 0;
  Histogram histogram;
};

SeriesStats summarize_series(std::span<const double> values, std::size_t bins = 200);

/// Empirical quantile (nearest rank, q in [0, 1]).
double quantile(std::vector<double> values, double q);

struct RatioSamples {
  std::vector<double> log_pr;  // beta * (log X1 - log X2)
  std::vector<double> log_or;  // logit(X1) - logit(X2)
};

/// Draws X1, X2 ~ U(0, 1) i.i.d. n times; both series use the same draws.
/// Sampling is chunked, chunk k seeded from (seed, k), so the draws do not
/// depend on beta.
RatioSamples sample_ratio_series(std::size_t n, double beta, std::uint64_t seed);

struct RatioStudyReport {
  std::size_t n_samples = 0;
  double beta = 0;
  SeriesStats log_pr;
  SeriesStats log_or;
};

RatioStudyReport sample_ratio_distributions(std::size_t n, double beta, std::uint64_t seed);

/// L2-normalized mean hidden activation of the response.
Eigen::VectorXd embed_response(const TinyLM<double>& model, std::span<const TokenId> response);

struct Diversity {
  /// 1/2 * sum_{i<j} cos(h_i, h_j) / (N (N - 1)), exactly as written in the metric.
  double literal = 0;
  /// sum_{i<j} cos(h_i, h_j) / (N (N - 1) / 2).
  double mean_cosine = 0;
};

Diversity diversity_d(std::span<const Eigen::VectorXd> embeddings);

/// Mean over prompts of diversity_d of each prompt's response embeddings.
Diversity per_input_diversity_from_embeddings(const std::vector<std::vector<Eigen::VectorXd>>& per_prompt);

/// diversity_d over the first embedding of each prompt.
Diversity across_input_diversity_from_embeddings(const std::vector<std::vector<Eigen::VectorXd>>& per_prompt);

struct DiversitySampling {
  std::size_t k = 5;
  double temperature = 1.0;
  std::size_t max_len = 16;
  TokenId eos_id = 0;
};

/// K sampled responses per prompt, embedded. Sample j of a prompt is seeded
/// from (seed, hash of prompt tokens, j), so results do not depend on prompt order.
std::vector<std::vector<Eigen::VectorXd>> sample_response_embeddings(const TinyLM<double>& model,
                                                                      const std::vector<Tokens>& prompts,
                                                                      const DiversitySampling& sampling,
                                                                      std::uint64_t seed);

Diversity per_input_diversity(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                              const DiversitySampling& sampling, std::uint64_t seed);

Diversity across_input_diversity(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                                 const DiversitySampling& sampling, std::uint64_t seed);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull);

}  // namespace orpo
