#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orpo/data.hpp"
#include "orpo/lm.hpp"
#include "orpo/objectives.hpp"
#include "orpo/optimizer.hpp"

namespace orpo {

enum class LossKind { kSft, kOrpo, kOrpoPr, kDpo };

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  LossKind loss_kind = LossKind::kOrpo;
  HyperParams<double> hp;
  double lr_max = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;    // 0 disables periodic evaluation
  long long max_steps = -1;      // < 0: no cap
  AdamWConfig adam;

  void validate() const;
};

/// Linear warmup 0 -> lr_max over warmup_frac * total_steps, then cosine
/// decay to 0 at total_steps.
double lr_at(std::size_t step, std::size_t total_steps, double lr_max, double warmup_frac);

struct TelemetryRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double l_sft = 0;
  double l_or = 0;
  double l_total = 0;
  double avg_logp_chosen = 0;
  double avg_logp_rejected = 0;
  /// log_odds(avg_logp_chosen) - log_odds(avg_logp_rejected) of the batch means.
  double log_odds_ratio = 0;
  double lr = 0;
};

inline constexpr const char* kTelemetryHeader =
    "step,epoch,l_sft,l_or,l_total,avg_logp_chosen,avg_logp_rejected,log_odds_ratio,lr";

void write_telemetry_csv(const std::vector<TelemetryRow>& rows, std::ostream& out);
/// Strict reader: throws std::invalid_argument unless the header matches exactly.
std::vector<TelemetryRow> read_telemetry_csv(std::istream& in);

struct Checkpoint {
  std::size_t step = 0;
  double eval_loss = 0;
  TinyLM<double> model;
};

struct TrainResult {
  TinyLM<double> model;
  TinyLM<double> best_model;
  std::size_t best_step = 0;
  std::optional<double> best_eval_loss;
  std::vector<TelemetryRow> telemetry;
  std::vector<Checkpoint> checkpoints;
  std::optional<TinyLM<double>> reference;  // dpo only: frozen copy of the input
};

class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t step, std::size_t batch, const std::string& what)
      : std::runtime_error(what), step_(step), batch_(batch) {}
  std::size_t step() const { return step_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t step_;
  std::size_t batch_;
};

/// Per-triple objective for one loss kind. Scores are clamped to
/// hp.logp_clamp; a clamped side contributes no odds-ratio gradient.
struct TripleObjective {
  LossReport<double> report;
  SeqScore<double> chosen;    // clamped
  SeqScore<double> rejected;  // clamped
  double scale_w = 0;         // d loss / d avg_logp_w
  double scale_l = 0;         // d loss / d avg_logp_l
};

TripleObjective evaluate_triple(const TinyLM<double>& model, const PreferenceTriple& t, LossKind kind,
                                const HyperParams<double>& hp, const TinyLM<double>* reference = nullptr);

/// Mean loss of `kind` over a dataset.
double mean_loss(const TinyLM<double>& model, const std::vector<PreferenceTriple>& data, LossKind kind,
                 const HyperParams<double>& hp, const TinyLM<double>* reference = nullptr);

TrainResult train(const TinyLM<double>& init, const DatasetSplit& split, const TrainConfig& cfg);

struct MarginReport {
  double avg_logp_chosen = 0;
  double avg_logp_rejected = 0;
  double margin = 0;
};

MarginReport heldout_margin(const TinyLM<double>& model, const std::vector<PreferenceTriple>& data);

struct SweepEntry {
  double lambda = 0;
  std::vector<TelemetryRow> telemetry;
  MarginReport final_margin;
  TinyLM<double> model;
};

/// Trains one ORPO run per lambda from the same initial model and config.
std::vector<SweepEntry> lambda_sweep(const TinyLM<double>& init, const DatasetSplit& split,
                                     const std::vector<double>& lambdas, const TrainConfig& cfg);

}  // namespace orpo
