#pragma once

// Sequence-level preference objectives and their derivatives with respect
// to the length-normalized log-likelihood avg_logp.
//
// Sign convention: every derivative here is of the loss being minimized
// (for the odds-ratio term that is -log sigmoid(z)), not of log sigmoid.

#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>

#include "orpo/lm.hpp"

namespace orpo {

template <typename Scalar>
struct HyperParams {
  Scalar lambda = Scalar(0.1);
  Scalar dpo_beta = Scalar(0.1);
  Scalar pr_beta = Scalar(1.0);
  Scalar logp_clamp = Scalar(-1e-6);

  void validate() const {
    if (!(lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
    if (!(dpo_beta > 0)) throw std::invalid_argument("dpo_beta must be > 0");
    if (!(pr_beta > 0)) throw std::invalid_argument("pr_beta must be > 0");
    if (!(logp_clamp < 0)) throw std::invalid_argument("logp_clamp must be < 0");
  }
};

template <typename Scalar>
struct LossReport {
  Scalar l_sft = 0;
  Scalar l_or = 0;
  Scalar l_total = 0;
  Scalar log_odds_w = 0;
  Scalar log_odds_l = 0;
  Scalar log_odds_ratio = 0;
  /// Contrast fed to -log sigmoid. Equals log_odds_ratio for the odds-ratio
  /// loss and pr_beta * (avg_logp_w - avg_logp_l) for the probability ratio.
  Scalar z = 0;
  /// sigmoid(-z)
  Scalar delta = 0;
  Scalar dL_or_dlogp_w = 0;
  Scalar dL_or_dlogp_l = 0;
};

template <typename Scalar>
struct Partials {
  Scalar d_w = 0;
  Scalar d_l = 0;
};

/// log(1 + exp(x)) without overflow: max(x, 0) + log1p(exp(-|x|)).
template <typename Scalar>
Scalar softplus(Scalar x) {
  using std::abs, std::exp, std::log1p, std::max;
  return max(x, Scalar(0)) + log1p(exp(-abs(x)));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= 0) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar log_sigmoid(Scalar x) {
  return -softplus(-x);
}

/// Per-token NLL of the chosen response.
template <typename Scalar>
Scalar sft_nll(const SeqScore<Scalar>& chosen) {
  return -chosen.avg_logp;
}

/// log(P / (1 - P)) with P = exp(avg_logp), as avg_logp - log(-expm1(avg_logp)).
template <typename Scalar>
Scalar log_odds(Scalar avg_logp, Scalar clamp = Scalar(-1e-6)) {
  using std::expm1, std::log;
  if (!(avg_logp <= clamp)) throw std::domain_error("probability saturated");
  return avg_logp - log(-expm1(avg_logp));
}

/// delta(d) = (1 + odds_w / odds_l)^-1 = sigmoid(-z).
template <typename Scalar>
Scalar delta_term(Scalar z) {
  return sigmoid(-z);
}

/// Returns {l_or, z} with z the log odds ratio and l_or = -log sigmoid(z).
template <typename Scalar>
std::pair<Scalar, Scalar> odds_ratio_loss(const SeqScore<Scalar>& w, const SeqScore<Scalar>& l,
                                          Scalar clamp = Scalar(-1e-6)) {
  const Scalar z = log_odds(w.avg_logp, clamp) - log_odds(l.avg_logp, clamp);
  return {softplus(-z), z};
}

/// d(-log sigmoid(z)) / d avg_logp for chosen and rejected. Each side carries
/// the 1 / (1 - P) amplification of d log odds / d avg_logp.
template <typename Scalar>
Partials<Scalar> or_partials(const SeqScore<Scalar>& w, const SeqScore<Scalar>& l, Scalar clamp = Scalar(-1e-6)) {
  using std::expm1;
  const Scalar z = odds_ratio_loss(w, l, clamp).second;
  const Scalar delta = delta_term(z);
  // 1 - P = -expm1(avg_logp)
  return {-delta / -expm1(w.avg_logp), delta / -expm1(l.avg_logp)};
}

template <typename Scalar>
LossReport<Scalar> orpo_loss(const SeqScore<Scalar>& w, const SeqScore<Scalar>& l, const HyperParams<Scalar>& hp) {
  LossReport<Scalar> r;
  r.l_sft = sft_nll(w);
  r.log_odds_w = log_odds(w.avg_logp, hp.logp_clamp);
  r.log_odds_l = log_odds(l.avg_logp, hp.logp_clamp);
  r.log_odds_ratio = r.log_odds_w - r.log_odds_l;
  r.z = r.log_odds_ratio;
  r.l_or = softplus(-r.z);
  r.l_total = r.l_sft + hp.lambda * r.l_or;
  r.delta = delta_term(r.z);
  const auto d = or_partials(w, l, hp.logp_clamp);
  r.dL_or_dlogp_w = d.d_w;
  r.dL_or_dlogp_l = d.d_l;
  return r;
}

/// Same as orpo_loss with z = pr_beta * (avg_logp_w - avg_logp_l).
template <typename Scalar>
LossReport<Scalar> pr_variant_loss(const SeqScore<Scalar>& w, const SeqScore<Scalar>& l,
                                   const HyperParams<Scalar>& hp) {
  LossReport<Scalar> r;
  r.l_sft = sft_nll(w);
  r.log_odds_w = log_odds(w.avg_logp, hp.logp_clamp);
  r.log_odds_l = log_odds(l.avg_logp, hp.logp_clamp);
  r.log_odds_ratio = r.log_odds_w - r.log_odds_l;
  r.z = hp.pr_beta * (w.avg_logp - l.avg_logp);
  r.l_or = softplus(-r.z);
  r.l_total = r.l_sft + hp.lambda * r.l_or;
  r.delta = delta_term(r.z);
  r.dL_or_dlogp_w = -hp.pr_beta * r.delta;
  r.dL_or_dlogp_l = hp.pr_beta * r.delta;
  return r;
}

/// DPO margin on summed log-likelihoods relative to a frozen reference.
template <typename Scalar>
Scalar dpo_margin(const SeqScore<Scalar>& policy_w, const SeqScore<Scalar>& policy_l, const SeqScore<Scalar>& ref_w,
                  const SeqScore<Scalar>& ref_l, Scalar beta) {
  return beta * ((policy_w.sum_logp - ref_w.sum_logp) - (policy_l.sum_logp - ref_l.sum_logp));
}

template <typename Scalar>
Scalar dpo_loss(const SeqScore<Scalar>& policy_w, const SeqScore<Scalar>& policy_l, const SeqScore<Scalar>& ref_w,
                const SeqScore<Scalar>& ref_l, Scalar beta) {
  return softplus(-dpo_margin(policy_w, policy_l, ref_w, ref_l, beta));
}

/// d dpo_loss / d avg_logp of the policy sequences (sum_logp = length * avg_logp).
template <typename Scalar>
Partials<Scalar> dpo_partials(const SeqScore<Scalar>& policy_w, const SeqScore<Scalar>& policy_l,
                              const SeqScore<Scalar>& ref_w, const SeqScore<Scalar>& ref_l, Scalar beta) {
  const Scalar g = beta * sigmoid(-dpo_margin(policy_w, policy_l, ref_w, ref_l, beta));
  return {-g * Scalar(policy_w.length), g * Scalar(policy_l.length)};
}

/// Arithmetic mean of per-triple reports (the batch expectation).
template <typename Scalar>
LossReport<Scalar> mean_report(std::span<const LossReport<Scalar>> reports) {
  if (reports.empty()) throw std::invalid_argument("mean_report: empty batch");
  LossReport<Scalar> m;
  for (const auto& r : reports) {
    m.l_sft += r.l_sft;
    m.l_or += r.l_or;
    m.l_total += r.l_total;
    m.log_odds_w += r.log_odds_w;
    m.log_odds_l += r.log_odds_l;
    m.log_odds_ratio += r.log_odds_ratio;
    m.z += r.z;
    m.delta += r.delta;
    m.dL_or_dlogp_w += r.dL_or_dlogp_w;
    m.dL_or_dlogp_l += r.dL_or_dlogp_l;
  }
  const Scalar n = Scalar(reports.size());
  m.l_sft /= n;
  m.l_or /= n;
  m.l_total /= n;
  m.log_odds_w /= n;
  m.log_odds_l /= n;
  m.log_odds_ratio /= n;
  m.z /= n;
  m.delta /= n;
  m.dL_or_dlogp_w /= n;
  m.dL_or_dlogp_l /= n;
  return m;
}

}  // namespace orpo
