#include "orpo/reward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "orpo/checkpoint.hpp"
#include "orpo/objectives.hpp"
#include "orpo/rng.hpp"
#include "orpo/trainer.hpp"

namespace orpo {

double reward_forward(const RewardModel& rm, std::span<const TokenId> x, std::span<const TokenId> y) {
  return rm.value_head.dot(response_features(rm.backbone, x, y)) + rm.bias;
}

void backward_reward(const RewardModel& rm, std::span<const TokenId> x, std::span<const TokenId> y, double scale,
                     RewardGrads& grads) {
  if (scale == 0.0) return;
  grads.value_head += scale * response_features(rm.backbone, x, y);
  grads.bias += scale;
  backward_response_features<double>(rm.backbone, x, y, scale * rm.value_head, grads.backbone);
}

double rm_pair_loss_from_margin(double margin) { return softplus(-margin); }

double rm_pair_loss(const RewardModel& rm, const PreferenceTriple& t) {
  return rm_pair_loss_from_margin(reward_forward(rm, t.x, t.y_w) - reward_forward(rm, t.x, t.y_l));
}

double pairwise_accuracy(const RewardModel& rm, const std::vector<PreferenceTriple>& data) {
  if (data.empty()) throw std::invalid_argument("pairwise_accuracy: empty dataset");
  double hits = 0;
  for (const auto& t : data) {
    const double rw = reward_forward(rm, t.x, t.y_w);
    const double rl = reward_forward(rm, t.x, t.y_l);
    hits += rw > rl ? 1.0 : (rw == rl ? 0.5 : 0.0);
  }
  return hits / static_cast<double>(data.size());
}

RewardTrainResult train_reward(const RewardModel& init, const DatasetSplit& split, const RewardTrainConfig& cfg) {
  if (split.train.empty()) throw std::invalid_argument("train_reward: empty training split");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw std::invalid_argument("train_reward: invalid config");
  RewardTrainResult result{init, 0.0, {}};
  RewardModel& rm = result.model;
  RewardGrads grads(rm);
  AdamW opt(cfg.adam);

  const std::size_t per_epoch = (split.train.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& batch : make_batches(split.train.size(), cfg.batch_size, cfg.seed, epoch)) {
      const double inv_n = 1.0 / static_cast<double>(batch.size());
      double loss = 0;
      for (std::size_t idx : batch) {
        const auto& t = split.train[idx];
        const double margin = reward_forward(rm, t.x, t.y_w) - reward_forward(rm, t.x, t.y_l);
        loss += rm_pair_loss_from_margin(margin) * inv_n;
        // d softplus(-m) / dm = -sigmoid(-m)
        const double g = -sigmoid(-margin) * inv_n;
        backward_reward(rm, t.x, t.y_w, g, grads);
        backward_reward(rm, t.x, t.y_l, -g, grads);
      }
      result.batch_losses.push_back(loss);
      auto params = tensors(rm.backbone.params());
      auto gs = tensors(grads.backbone);
      params.push_back({"value_head", Eigen::Map<Eigen::VectorXd>(rm.value_head.data(), rm.value_head.size())});
      gs.push_back({"value_head", Eigen::Map<Eigen::VectorXd>(grads.value_head.data(), grads.value_head.size())});
      params.push_back({"bias", Eigen::Map<Eigen::VectorXd>(&rm.bias, 1)});
      gs.push_back({"bias", Eigen::Map<Eigen::VectorXd>(&grads.bias, 1)});
      opt.step(params, gs, lr_at(step, total, cfg.lr_max, cfg.warmup_frac));
      ++step;
    }
  }
  const auto& heldout = split.eval.empty() ? split.test : split.eval;
  if (!heldout.empty()) result.heldout_accuracy = pairwise_accuracy(rm, heldout);
  return result;
}

void save_reward_model(const RewardModel& rm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write("ORPR", 4);
  io::put_u32(out, 1);
  write_checkpoint(rm.backbone, out);
  for (Eigen::Index i = 0; i < rm.value_head.size(); ++i) io::put_f64(out, rm.value_head[i]);
  io::put_f64(out, rm.bias);
}

RewardModel load_reward_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[4] = {};
  if (!in.read(magic, 4) || std::string(magic, 4) != "ORPR") throw std::runtime_error("not an ORPR reward model");
  if (io::get_u32(in) != 1) throw std::runtime_error("unsupported reward model version");
  RewardModel rm(read_checkpoint(in));
  for (Eigen::Index i = 0; i < rm.value_head.size(); ++i) rm.value_head[i] = io::get_f64(in);
  rm.bias = io::get_f64(in);
  return rm;
}

namespace {

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

WinRateReport win_rate(const TinyLM<double>& model_a, const TinyLM<double>& model_b,
                       const std::vector<Tokens>& prompts, const RewardModel& rm, const SamplingOptions& sampling,
                       std::size_t rounds, std::uint64_t seed) {
  if (rounds < 1) throw std::invalid_argument("win_rate: rounds must be >= 1");
  if (prompts.empty()) throw std::invalid_argument("win_rate: no prompts");
  WinRateReport rep;
  rep.rounds = rounds;
  double sum_a = 0;
  double sum_b = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    double round_wins = 0;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      const std::uint64_t s = make_rng({seed, i, r})();
      const auto ya = generate(model_a, prompts[i], sampling.temperature, sampling.max_len, s, sampling.eos_id);
      const auto yb = generate(model_b, prompts[i], sampling.temperature, sampling.max_len, s, sampling.eos_id);
      const double ra = reward_forward(rm, prompts[i], ya);
      const double rb = reward_forward(rm, prompts[i], yb);
      rep.scores.push_back({i, r, 'a', ra});
      rep.scores.push_back({i, r, 'b', rb});
      sum_a += ra;
      sum_b += rb;
      ++rep.comparisons;
      if (ra > rb) {
        rep.wins_a += 1;
        round_wins += 1;
      } else if (rb > ra) {
        rep.wins_b += 1;
      } else {
        ++rep.ties;
        rep.wins_a += 0.5;
        rep.wins_b += 0.5;
        round_wins += 0.5;
      }
    }
    rep.per_round_rates.push_back(100.0 * round_wins / static_cast<double>(prompts.size()));
  }
  double mean_rate = 0;
  for (double v : rep.per_round_rates) mean_rate += v;
  rep.win_rate_a = mean_rate / static_cast<double>(rounds);
  rep.win_rate_a_std = sample_std(rep.per_round_rates);
  rep.mean_reward_a = sum_a / static_cast<double>(rep.comparisons);
  rep.mean_reward_b = sum_b / static_cast<double>(rep.comparisons);
  return rep;
}

RewardDistribution summarize_rewards(std::vector<double> scores) {
  if (scores.empty()) throw std::invalid_argument("summarize_rewards: no scores");
  RewardDistribution d;
  const auto n = static_cast<double>(scores.size());
  for (double s : scores) d.mean += s / n;
  double ss = 0;
  for (double s : scores) ss += (s - d.mean) * (s - d.mean);
  d.std = std::sqrt(ss / n);
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  for (int k = 0; k <= 10; ++k) {
    // nearest-rank order statistic
    const double pos = (static_cast<double>(sorted.size()) - 1.0) * k / 10.0;
    d.deciles.push_back(sorted[static_cast<std::size_t>(std::llround(pos))]);
  }
  d.scores = std::move(scores);
  return d;
}

RewardDistribution reward_distribution(const TinyLM<double>& model, const std::vector<Tokens>& prompts,
                                       const RewardModel& rm, const SamplingOptions& sampling, std::uint64_t seed) {
  if (prompts.empty()) throw std::invalid_argument("reward_distribution: no prompts");
  std::vector<double> scores;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const std::uint64_t s = make_rng({seed, i, 0})();
    const auto y = generate(model, prompts[i], sampling.temperature, sampling.max_len, s, sampling.eos_id);
    scores.push_back(reward_forward(rm, prompts[i], y));
  }
  return summarize_rewards(std::move(scores));
}

}  // namespace orpo
