#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "orpo/data.hpp"
#include "orpo/lm.hpp"
#include "orpo/optimizer.hpp"

namespace orpo {

/// Scalar reward: value_head . mean hidden state over response positions + bias.
struct RewardModel {
  TinyLM<double> backbone;
  Eigen::VectorXd value_head;
  double bias = 0;

  explicit RewardModel(TinyLM<double> lm)
      : backbone(std::move(lm)), value_head(Eigen::VectorXd::Zero(backbone.config().hidden_dim)) {}
};

double reward_forward(const RewardModel& rm, std::span<const TokenId> x, std::span<const TokenId> y);

struct RewardGrads {
  GradBlock<double> backbone;
  Eigen::VectorXd value_head;
  double bias = 0;

  explicit RewardGrads(const RewardModel& rm)
      : backbone(rm.backbone.zero_grads()), value_head(Eigen::VectorXd::Zero(rm.value_head.size())) {}
};

/// grads += scale * d reward(x, y) / d theta.
void backward_reward(const RewardModel& rm, std::span<const TokenId> x, std::span<const TokenId> y, double scale,
                     RewardGrads& grads);

/// -log sigmoid(r(x, y_w) - r(x, y_l)).
double rm_pair_loss(const RewardModel& rm, const PreferenceTriple& t);
double rm_pair_loss_from_margin(double margin);

/// Fraction of triples with r_w > r_l; ties count one half.
double pairwise_accuracy(const RewardModel& rm, const std::vector<PreferenceTriple>& data);

struct RewardTrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  double lr_max = 1e-2;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  AdamWConfig adam;
};

struct RewardTrainResult {
  RewardModel model;
  double heldout_accuracy = 0;
  std::vector<double> batch_losses;
};

/// Trains backbone and head on the pairwise objective. Held-out accuracy is
/// measured on split.eval (split.test when eval is empty).
RewardTrainResult train_reward(const RewardModel& init, const DatasetSplit& split, const RewardTrainConfig& cfg);

/// "ORPR" | u32 version | embedded ORPK checkpoint | f64 value_head[hidden] | f64 bias.
void save_reward_model(const RewardModel& rm, const std::filesystem::path& path);
RewardModel load_reward_model(const std::filesystem::path& path);

struct ScoreRecord {
  std::size_t prompt_id = 0;
  std::size_t round = 0;
  char model = 'a';
  double reward = 0;
};

struct WinRateReport {
  double wins_a = 0;  // ties contribute 0.5 to both sides
  double wins_b = 0;
  std::size_t ties = 0;
  std::size_t comparisons = 0;
  double win_rate_a = 0;      // percent, mean over rounds
  double win_rate_a_std = 0;  // sample std over rounds
  double mean_reward_a = 0;
  double mean_reward_b = 0;
  std::size_t rounds = 0;
  std::vector<double> per_round_rates;
  std::vector<ScoreRecord> scores;
};

struct SamplingOptions {
  double temperature = 1.0;
  std::size_t max_len = 16;
  TokenId eos_id = 0;
};

/// Each round, both models sample one response per prompt with the seed
/// keyed by (seed, prompt_index, round); a wins where r_a > r_b.
WinRateReport win_rate(const TinyLM<double>& model_a, const TinyLM<double>& model_b,
                       const std::vector<Tokens>& prompts, const RewardModel& rm, const SamplingOptions& sampling,
                       std::size_t rounds, std::uint64_t seed);

struct RewardDistribution {
  double mean = 0;
  double std = 0;               // population
  std::vector<double> deciles;  // 0%, 10%, ..., 100%
  std::vector<double> scores;
};

RewardDistribution summarize_rewards(std::vector<double> scores);

RewardDistribution reward_distribution(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                                       const RewardModel& rm, const SamplingOptions& sampling, std::uint64_t seed);

}  // namespace orpo
