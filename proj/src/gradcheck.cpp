#include "orpo/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "orpo/lm.hpp"
#include "orpo/objectives.hpp"
#include "orpo/reward.hpp"
#include "orpo/rng.hpp"
#include "orpo/trainer.hpp"

namespace orpo {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

constexpr double kScalarStep = 1e-7;
constexpr double kNetworkStep = 1e-5;

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

void record(GradCheckSuite& s, double analytic, double numeric, const std::string& what) {
  ++s.checks;
  const double err = relative_error(analytic, numeric);
  if (s.worst_case.empty() || err > s.max_rel_err) {
    s.max_rel_err = err;
    char buf[96];
    std::snprintf(buf, sizeof buf, " analytic=%.12g numeric=%.12g", analytic, numeric);
    s.worst_case = what + buf;
  }
}

std::string pair_label(double pw, double pl) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "P_w=%.6f P_l=%.6f", pw, pl);
  return buf;
}

using Score = SeqScore<double>;

GradCheckSuite check_scalar_partials(const std::string& name, const GradCheckOptions& opts, std::uint64_t salt,
                                     const std::function<double(const Score&, const Score&)>& loss,
                                     const std::function<Partials<double>(const Score&, const Score&)>& partials) {
  GradCheckSuite s{name, 0, 0, opts.scalar_tolerance, {}};
  Rng rng = make_rng({opts.seed, salt});
  for (std::size_t i = 0; i < opts.trials; ++i) {
    const double pw = uniform_range(rng, 0.02, 0.98);
    const double pl = uniform_range(rng, 0.02, 0.98);
    const Score w = Score::from_avg(std::log(pw), 5);
    const Score l = Score::from_avg(std::log(pl), 7);
    const auto d = partials(w, l);
    const double nw = central_difference([&](double a) { return loss(Score::from_avg(a, w.length), l); },
                                         w.avg_logp, kScalarStep);
    const double nl = central_difference([&](double a) { return loss(w, Score::from_avg(a, l.length)); },
                                         l.avg_logp, kScalarStep);
    record(s, d.d_w, nw, pair_label(pw, pl) + " (chosen)");
    record(s, d.d_l, nl, pair_label(pw, pl) + " (rejected)");
  }
  return s;
}

LMConfig gradcheck_config(std::uint32_t seed) {
  LMConfig c;
  c.vocab_size = 12;
  c.embed_dim = 6;
  c.hidden_dim = 10;
  c.context_window = 3;
  c.seed = seed;
  c.pad_id = 10;
  return c;
}

/// Random model with every tensor populated so no gradient is trivially zero.
TinyLM<double> random_model(std::uint32_t seed) {
  TinyLM<double> m(gradcheck_config(seed));
  Rng rng = make_rng({seed, 0x7263});
  m.params().for_each([&](const char*, Eigen::Map<Eigen::VectorXd> t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = uniform_range(rng, -0.5, 0.5);
  });
  return m;
}

Tokens random_tokens(Rng& rng, std::size_t lo, std::size_t hi, std::uint32_t vocab) {
  Tokens t(lo + uniform_index(rng, hi - lo + 1));
  for (auto& id : t) id = static_cast<TokenId>(uniform_index(rng, vocab));
  return t;
}

template <typename LossFn, typename GradFn>
void check_network(GradCheckSuite& s, TinyLM<double>& m, Rng& rng, std::size_t coords, const std::string& label,
                   LossFn loss, GradFn grad) {
  auto g = m.zero_grads();
  grad(g);
  const Eigen::Index n = m.params().size();
  for (std::size_t c = 0; c < coords; ++c) {
    const auto k = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::size_t>(n)));
    double& theta = m.params().flat(k);
    const double saved = theta;
    const double numeric = central_difference(
        [&](double v) {
          theta = v;
          return loss();
        },
        saved, kNetworkStep);
    theta = saved;
    record(s, g.flat(k), numeric, label + " param#" + std::to_string(k));
  }
}

}  // namespace

std::vector<GradCheckSuite> run_gradcheck(const GradCheckOptions& opts) {
  if (opts.trials < 1) throw std::invalid_argument("gradcheck: trials must be >= 1");
  std::vector<GradCheckSuite> suites;

  suites.push_back(check_scalar_partials(
      "or_partials", opts, 1, [](const Score& w, const Score& l) { return odds_ratio_loss(w, l).first; },
      [](const Score& w, const Score& l) { return or_partials(w, l); }));

  HyperParams<double> hp;
  hp.pr_beta = 0.2;
  suites.push_back(check_scalar_partials(
      "pr_partials", opts, 2, [&](const Score& w, const Score& l) { return pr_variant_loss(w, l, hp).l_or; },
      [&](const Score& w, const Score& l) {
        const auto r = pr_variant_loss(w, l, hp);
        return Partials<double>{r.dL_or_dlogp_w, r.dL_or_dlogp_l};
      }));

  const Score ref_w = Score::from_avg(std::log(0.3), 5);
  const Score ref_l = Score::from_avg(std::log(0.25), 7);
  const double beta = 0.1;
  suites.push_back(check_scalar_partials(
      "dpo_partials", opts, 3, [&](const Score& w, const Score& l) { return dpo_loss(w, l, ref_w, ref_l, beta); },
      [&](const Score& w, const Score& l) { return dpo_partials(w, l, ref_w, ref_l, beta); }));

  const std::size_t net_trials = std::min(opts.trials, opts.network_trials);
  GradCheckSuite orpo_net{"orpo_network", 0, 0, opts.network_tolerance, {}};
  GradCheckSuite rm_head{"reward_head", 0, 0, opts.scalar_tolerance, {}};
  GradCheckSuite rm_net{"reward_network", 0, 0, opts.network_tolerance, {}};
  Rng rng = make_rng({opts.seed, 4});
  for (std::size_t trial = 0; trial < net_trials; ++trial) {
    auto m = random_model(static_cast<std::uint32_t>(opts.seed * 1000 + trial));
    const std::uint32_t content = 10;  // ids 10, 11 are pad and eos
    PreferenceTriple t{random_tokens(rng, 0, 4, content), random_tokens(rng, 1, 6, content),
                       random_tokens(rng, 1, 6, content)};
    HyperParams<double> orpo_hp;
    orpo_hp.lambda = 1.0;
    const std::string label = "trial " + std::to_string(trial);
    check_network(
        orpo_net, m, rng, opts.coords_per_model, label,
        [&] { return evaluate_triple(m, t, LossKind::kOrpo, orpo_hp).report.l_total; },
        [&](GradBlock<double>& g) {
          const auto o = evaluate_triple(m, t, LossKind::kOrpo, orpo_hp);
          backward_seq_logp(m, t.x, t.y_w, o.scale_w, g);
          backward_seq_logp(m, t.x, t.y_l, o.scale_l, g);
        });

    RewardModel rm(m);
    for (Eigen::Index i = 0; i < rm.value_head.size(); ++i) rm.value_head[i] = uniform_range(rng, -1, 1);
    rm.bias = uniform_range(rng, -1, 1);
    RewardGrads rg(rm);
    const double margin = reward_forward(rm, t.x, t.y_w) - reward_forward(rm, t.x, t.y_l);
    const double gm = -sigmoid(-margin);
    backward_reward(rm, t.x, t.y_w, gm, rg);
    backward_reward(rm, t.x, t.y_l, -gm, rg);
    for (Eigen::Index i = 0; i < rm.value_head.size(); ++i) {
      const double saved = rm.value_head[i];
      const double numeric = central_difference(
          [&](double v) {
            rm.value_head[i] = v;
            return rm_pair_loss(rm, t);
          },
          saved, kNetworkStep);
      rm.value_head[i] = saved;
      record(rm_head, rg.value_head[i], numeric, label + " head#" + std::to_string(i));
    }
    check_network(
        rm_net, rm.backbone, rng, opts.coords_per_model, label, [&] { return rm_pair_loss(rm, t); },
        [&](GradBlock<double>& g) {
          RewardGrads local(rm);
          const double mg = reward_forward(rm, t.x, t.y_w) - reward_forward(rm, t.x, t.y_l);
          const double s = -sigmoid(-mg);
          backward_reward(rm, t.x, t.y_w, s, local);
          backward_reward(rm, t.x, t.y_l, -s, local);
          g = local.backbone;
        });
  }
  suites.push_back(orpo_net);
  suites.push_back(rm_head);
  suites.push_back(rm_net);
  return suites;
}

nlohmann::json gradcheck_json(const std::vector<GradCheckSuite>& suites) {
  nlohmann::json j;
  bool all = true;
  j["suites"] = nlohmann::json::array();
  for (const auto& s : suites) {
    all = all && s.pass();
    j["suites"].push_back({{"name", s.name},
                           {"checks", s.checks},
                           {"max_rel_err", s.max_rel_err},
                           {"tolerance", s.tolerance},
                           {"pass", s.pass()},
                           {"worst_case", s.worst_case}});
  }
  j["pass"] = all;
  return j;
}

}  // namespace orpo
