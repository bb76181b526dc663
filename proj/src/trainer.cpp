#include "orpo/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace orpo {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSft: return "sft";
    case LossKind::kOrpo: return "orpo";
    case LossKind::kOrpoPr: return "orpo_pr";
    case LossKind::kDpo: return "dpo";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "sft") return LossKind::kSft;
  if (name == "orpo") return LossKind::kOrpo;
  if (name == "orpo_pr") return LossKind::kOrpoPr;
  if (name == "dpo") return LossKind::kDpo;
  throw std::invalid_argument("unknown loss kind '" + name + "' (expected sft, orpo, orpo_pr, dpo)");
}

void TrainConfig::validate() const {
  hp.validate();
  if (!(lr_max > 0)) throw std::invalid_argument("lr_max must be > 0");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(warmup_frac >= 0 && warmup_frac <= 1)) throw std::invalid_argument("warmup_frac must be in [0, 1]");
}

double lr_at(std::size_t step, std::size_t total_steps, double lr_max, double warmup_frac) {
  if (step > total_steps) throw std::invalid_argument("lr_at: step beyond total_steps");
  if (total_steps == 0) return 0.0;
  const double warmup = warmup_frac * static_cast<double>(total_steps);
  const auto s = static_cast<double>(step);
  if (s < warmup) return lr_max * s / warmup;
  const double span = static_cast<double>(total_steps) - warmup;
  if (span <= 0) return lr_max;
  const double progress = (s - warmup) / span;
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void write_telemetry_csv(const std::vector<TelemetryRow>& rows, std::ostream& out) {
  out << kTelemetryHeader << '\n';
  for (const auto& r : rows) {
    out << r.step << ',' << r.epoch << ',' << fmt9(r.l_sft) << ',' << fmt9(r.l_or) << ',' << fmt9(r.l_total) << ','
        << fmt9(r.avg_logp_chosen) << ',' << fmt9(r.avg_logp_rejected) << ',' << fmt9(r.log_odds_ratio) << ','
        << fmt9(r.lr) << '\n';
  }
}

std::vector<TelemetryRow> read_telemetry_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("telemetry: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTelemetryHeader) throw std::invalid_argument("telemetry: header mismatch: " + line);
  std::vector<TelemetryRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> cells;
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 9) throw std::invalid_argument("telemetry: line " + std::to_string(line_no) + " has wrong arity");
    try {
      TelemetryRow r;
      r.step = std::stoull(cells[0]);
      r.epoch = std::stoull(cells[1]);
      r.l_sft = std::stod(cells[2]);
      r.l_or = std::stod(cells[3]);
      r.l_total = std::stod(cells[4]);
      r.avg_logp_chosen = std::stod(cells[5]);
      r.avg_logp_rejected = std::stod(cells[6]);
      r.log_odds_ratio = std::stod(cells[7]);
      r.lr = std::stod(cells[8]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("telemetry: line " + std::to_string(line_no) + " is not numeric");
    }
  }
  return rows;
}

TripleObjective evaluate_triple(const TinyLM<double>& model, const PreferenceTriple& t, LossKind kind,
                                const HyperParams<double>& hp, const TinyLM<double>* reference) {
  const auto raw_w = seq_score(model, t.x, t.y_w);
  const auto raw_l = seq_score(model, t.x, t.y_l);
  TripleObjective o;
  if (!std::isfinite(raw_w.avg_logp) || !std::isfinite(raw_l.avg_logp)) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    o.chosen = raw_w;
    o.rejected = raw_l;
    o.report.l_total = nan;
    o.scale_w = nan;
    o.scale_l = nan;
    return o;
  }
  const bool active_w = raw_w.avg_logp <= hp.logp_clamp;
  const bool active_l = raw_l.avg_logp <= hp.logp_clamp;
  o.chosen = active_w ? raw_w : SeqScore<double>::from_avg(hp.logp_clamp, raw_w.length);
  o.rejected = active_l ? raw_l : SeqScore<double>::from_avg(hp.logp_clamp, raw_l.length);

  switch (kind) {
    case LossKind::kSft:
    case LossKind::kOrpo:
    case LossKind::kOrpoPr: {
      HyperParams<double> local = hp;
      if (kind == LossKind::kSft) local.lambda = 0;
      o.report = kind == LossKind::kOrpoPr ? pr_variant_loss(o.chosen, o.rejected, local)
                                           : orpo_loss(o.chosen, o.rejected, local);
      o.scale_w = -1.0 + local.lambda * (active_w ? o.report.dL_or_dlogp_w : 0.0);
      o.scale_l = local.lambda * (active_l ? o.report.dL_or_dlogp_l : 0.0);
      break;
    }
    case LossKind::kDpo: {
      if (reference == nullptr) throw std::invalid_argument("dpo requires a reference model");
      const auto ref_w = seq_score(*reference, t.x, t.y_w);
      const auto ref_l = seq_score(*reference, t.x, t.y_l);
      HyperParams<double> local = hp;
      local.lambda = 0;
      o.report = orpo_loss(o.chosen, o.rejected, local);
      o.report.l_total = dpo_loss(raw_w, raw_l, ref_w, ref_l, hp.dpo_beta);
      const auto d = dpo_partials(raw_w, raw_l, ref_w, ref_l, hp.dpo_beta);
      o.scale_w = d.d_w;
      o.scale_l = d.d_l;
      break;
    }
  }
  return o;
}

double mean_loss(const TinyLM<double>& model, const std::vector<PreferenceTriple>& data, LossKind kind,
                 const HyperParams<double>& hp, const TinyLM<double>* reference) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  double sum = 0;
  for (const auto& t : data) sum += evaluate_triple(model, t, kind, hp, reference).report.l_total;
  return sum / static_cast<double>(data.size());
}

TrainResult train(const TinyLM<double>& init, const DatasetSplit& split, const TrainConfig& cfg) {
  cfg.validate();
  if (split.train.empty()) throw std::invalid_argument("train: empty training split");

  TrainResult result{init, init, 0, std::nullopt, {}, {}, std::nullopt};
  if (cfg.loss_kind == LossKind::kDpo) result.reference = init;
  const TinyLM<double>* reference = result.reference ? &*result.reference : nullptr;

  const std::size_t per_epoch = (split.train.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t total = per_epoch * cfg.epochs;
  if (cfg.max_steps >= 0) total = std::min(total, static_cast<std::size_t>(cfg.max_steps));

  TinyLM<double>& model = result.model;
  GradBlock<double> grads = model.zero_grads();
  AdamW opt(cfg.adam);

  auto evaluate_and_checkpoint = [&](std::size_t step) {
    if (split.eval.empty()) return;
    const double loss = mean_loss(model, split.eval, cfg.loss_kind, cfg.hp, reference);
    result.checkpoints.push_back({step, loss, model});
    if (!result.best_eval_loss || loss < *result.best_eval_loss) {
      result.best_eval_loss = loss;
      result.best_model = model;
      result.best_step = step;
    }
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    const auto batches = make_batches(split.train.size(), cfg.batch_size, cfg.seed, epoch);
    for (std::size_t b = 0; b < batches.size() && step < total; ++b) {
      const auto& batch = batches[b];
      const double inv_n = 1.0 / static_cast<double>(batch.size());
      std::vector<LossReport<double>> reports;
      double mean_w = 0;
      double mean_l = 0;
      for (std::size_t idx : batch) {
        const auto& t = split.train[idx];
        const auto o = evaluate_triple(model, t, cfg.loss_kind, cfg.hp, reference);
        if (!std::isfinite(o.report.l_total) || !std::isfinite(o.scale_w) || !std::isfinite(o.scale_l)) {
          throw TrainingAborted(step, b,
                                "non-finite loss at step " + std::to_string(step) + ", batch " + std::to_string(b));
        }
        reports.push_back(o.report);
        mean_w += o.chosen.avg_logp * inv_n;
        mean_l += o.rejected.avg_logp * inv_n;
        backward_seq_logp(model, t.x, t.y_w, o.scale_w * inv_n, grads);
        backward_seq_logp(model, t.x, t.y_l, o.scale_l * inv_n, grads);
      }
      const auto m = mean_report<double>(reports);
      const double lr = lr_at(step, total, cfg.lr_max, cfg.warmup_frac);
      TelemetryRow row;
      row.step = step;
      row.epoch = epoch;
      row.l_sft = m.l_sft;
      row.l_or = m.l_or;
      row.l_total = m.l_total;
      row.avg_logp_chosen = mean_w;
      row.avg_logp_rejected = mean_l;
      row.log_odds_ratio = log_odds(mean_w, cfg.hp.logp_clamp) - log_odds(mean_l, cfg.hp.logp_clamp);
      row.lr = lr;
      result.telemetry.push_back(row);
      try {
        optimizer_step(model, grads, opt, lr);
      } catch (const std::runtime_error& e) {
        throw TrainingAborted(step, b, std::string(e.what()) + " at step " + std::to_string(step) + ", batch " +
                                           std::to_string(b));
      }
      ++step;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step != total) evaluate_and_checkpoint(step);
    }
  }
  if (step > 0) evaluate_and_checkpoint(step);
  if (!result.best_eval_loss) result.best_model = model;
  return result;
}

MarginReport heldout_margin(const TinyLM<double>& model, const std::vector<PreferenceTriple>& data) {
  if (data.empty()) throw std::invalid_argument("heldout_margin: empty dataset");
  MarginReport r;
  for (const auto& t : data) {
    r.avg_logp_chosen += seq_score(model, t.x, t.y_w).avg_logp;
    r.avg_logp_rejected += seq_score(model, t.x, t.y_l).avg_logp;
  }
  r.avg_logp_chosen /= static_cast<double>(data.size());
  r.avg_logp_rejected /= static_cast<double>(data.size());
  r.margin = r.avg_logp_chosen - r.avg_logp_rejected;
  return r;
}

std::vector<SweepEntry> lambda_sweep(const TinyLM<double>& init, const DatasetSplit& split,
                                     const std::vector<double>& lambdas, const TrainConfig& cfg) {
  if (lambdas.empty()) throw std::invalid_argument("lambda_sweep: no lambda values");
  const auto& heldout = split.eval.empty() ? split.test : split.eval;
  std::vector<SweepEntry> out;
  for (double lambda : lambdas) {
    TrainConfig run = cfg;
    run.loss_kind = LossKind::kOrpo;
    run.hp.lambda = lambda;
    auto res = train(init, split, run);
    out.push_back({lambda, std::move(res.telemetry), heldout_margin(res.model, heldout), std::move(res.model)});
  }
  return out;
}

}  // namespace orpo
