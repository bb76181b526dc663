#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "orpo/analysis.hpp"
#include "orpo/checkpoint.hpp"
#include "orpo/cli.hpp"
#include "orpo/gradcheck.hpp"
#include "orpo/objectives.hpp"
#include "orpo/reward.hpp"
#include "orpo/rng.hpp"
#include "orpo/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace orpo;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (ok ? "" : "!") << what << "; ";
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void cli_or_throw(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != cli::kOk) throw std::runtime_error(args.front() + " exited " + std::to_string(code) + ": " + err.str());
}

std::vector<TelemetryRow> telemetry_of(const fs::path& dir, const std::string& file = "telemetry.csv") {
  std::istringstream in(read_file(dir / file));
  return read_telemetry_csv(in);
}

std::vector<double> epoch_means(const std::vector<TelemetryRow>& rows, double TelemetryRow::*field) {
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  for (const auto& r : rows) {
    acc[r.epoch].first += r.*field;
    acc[r.epoch].second += 1;
  }
  std::vector<double> means;
  for (const auto& [epoch, s] : acc) means.push_back(s.first / static_cast<double>(s.second));
  return means;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const auto va = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
  const auto vb = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd ca = va.array() - va.mean();
  const Eigen::VectorXd cb = vb.array() - vb.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

std::map<std::string, std::string> directory_bytes(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = read_file(e.path());
  return files;
}

struct Workspace {
  fs::path root;
  std::string corpus;

  fs::path at(const std::string& name) const { return root / name; }
  std::vector<std::string> train_args(const std::string& loss, const std::string& out) const {
    return {"train", "--dataset", corpus, "--loss", loss, "--lambda", "1", "--out", at(out).string()};
  }
};

Outcome gradient_correctness() {
  Outcome o;
  const auto t0 = Clock::now();
  GradCheckOptions opts;
  const auto suites = run_gradcheck(opts);
  const double elapsed = seconds_since(t0);
  for (const auto& s : suites) {
    o.require(s.pass(), s.name + " max_rel_err=" + num(s.max_rel_err) + " tol=" + num(s.tolerance));
  }
  o.require(suites.front().name == "or_partials" && suites.front().checks >= 2 * 100, "or_partials over >=100 pairs");
  std::size_t params = 0;
  {
    LMConfig cfg;
    cfg.vocab_size = 8;
    params = TinyLM<double>(cfg).params().size();
  }
  o.require(params <= 10000, "network params " + std::to_string(params));
  o.require(elapsed < 10.0, "runtime " + num(elapsed) + "s");
  return o;
}

Outcome closed_form_values() {
  Outcome o;
  const double ln2 = std::log(2.0);
  const auto score = [](double p) { return SeqScore<double>::from_avg(std::log(p), 1); };
  const auto [l0, z0] = odds_ratio_loss(score(0.5), score(0.5));
  o.require(std::abs(l0 - ln2) <= 1e-12 && z0 == 0.0, "l_or(z=0)=" + num(l0));
  const double l_ex = odds_ratio_loss(score(0.8), score(0.5)).first;
  o.require(std::abs(l_ex - std::log(1.25)) <= 1e-12, "l_or(0.8,0.5)=" + num(l_ex));
  const double d0 = delta_term(0.0);
  o.require(std::abs(d0 - 0.5) <= 1e-12, "delta(0)=" + num(d0));
  const double rm = rm_pair_loss_from_margin(0.0);
  o.require(std::abs(rm - ln2) <= 1e-12, "rm_pair_loss(0)=" + num(rm));
  return o;
}

Outcome ratio_study() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto high = sample_ratio_distributions(50000, 1.0, 0);
  const auto low = sample_ratio_distributions(50000, 0.2, 0);
  const double elapsed = seconds_since(t0);
  const double or_target = std::sqrt(2.0 * std::numbers::pi * std::numbers::pi / 3.0);
  const double pr_target = std::sqrt(2.0);
  const double or_err = std::abs(high.log_or.std - or_target) / or_target;
  const double pr_err = std::abs(high.log_pr.std - pr_target) / pr_target;
  o.require(or_err < 0.02, "std log OR=" + num(high.log_or.std) + " rel_err=" + num(or_err));
  o.require(pr_err < 0.02, "std log PR(1)=" + num(high.log_pr.std) + " rel_err=" + num(pr_err));
  o.require(high.log_or.std > high.log_pr.std && high.log_pr.std > low.log_pr.std,
            "ordering OR > PR(1) > PR(0.2)=" + num(low.log_pr.std));
  o.require(elapsed < 5.0, "runtime " + num(elapsed) + "s");
  return o;
}

Outcome sft_miscalibration(const Workspace& ws) {
  Outcome o;
  const auto t0 = Clock::now();
  cli_or_throw(ws.train_args("sft", "sft"));
  const double elapsed = seconds_since(t0);
  const auto rows = telemetry_of(ws.at("sft"));
  const auto chosen = epoch_means(rows, &TelemetryRow::avg_logp_chosen);
  const auto rejected = epoch_means(rows, &TelemetryRow::avg_logp_rejected);
  o.require(chosen.size() >= 5, "epochs " + std::to_string(chosen.size()));
  o.require(rejected.back() > rejected.front(),
            "rejected " + num(rejected.front()) + " -> " + num(rejected.back()));
  const double r = pearson(chosen, rejected);
  o.require(r > 0.9, "pearson(chosen, rejected)=" + num(r));
  o.require(elapsed < 300.0, "runtime " + num(elapsed) + "s");
  return o;
}

Outcome orpo_dynamics(const Workspace& ws) {
  Outcome o;
  cli_or_throw(ws.train_args("orpo", "orpo"));
  const auto rows = telemetry_of(ws.at("orpo"));
  const auto ratio = epoch_means(rows, &TelemetryRow::log_odds_ratio);
  std::size_t increases = 0;
  for (std::size_t i = 1; i < ratio.size(); ++i) increases += ratio[i] > ratio[i - 1] ? 1 : 0;
  const double frac = static_cast<double>(increases) / static_cast<double>(ratio.size() - 1);
  o.require(frac >= 0.8, "increasing epoch pairs " + num(frac));
  o.require(ratio.back() > ratio.front(), "log odds ratio " + num(ratio.front()) + " -> " + num(ratio.back()));
  const double orpo_rej = epoch_means(rows, &TelemetryRow::avg_logp_rejected).back();
  const double sft_rej = epoch_means(telemetry_of(ws.at("sft")), &TelemetryRow::avg_logp_rejected).back();
  o.require(orpo_rej < sft_rej, "final rejected orpo=" + num(orpo_rej) + " sft=" + num(sft_rej));
  return o;
}

Outcome lambda_ablation(const Workspace& ws) {
  Outcome o;
  cli_or_throw({"lambda-sweep", "--dataset", ws.corpus, "--lambdas", "0.1,0.5,1.0", "--out", ws.at("sweep").string()});
  const auto runs = json::parse(read_file(ws.at("sweep") / "sweep.json"))["runs"];
  o.require(runs.size() == 3, "three runs");
  std::string margins;
  bool increasing = true;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    margins += num(runs[i]["margin"].get<double>()) + " ";
    if (i > 0 && !(runs[i]["margin"].get<double>() > runs[i - 1]["margin"].get<double>())) increasing = false;
  }
  o.require(increasing, "held-out margins " + margins);
  return o;
}

Outcome pr_vs_or(const Workspace& ws) {
  Outcome o;
  cli_or_throw(ws.train_args("orpo_pr", "orpo_pr"));
  const double pr = epoch_means(telemetry_of(ws.at("orpo_pr")), &TelemetryRow::avg_logp_rejected).back();
  const double orr = epoch_means(telemetry_of(ws.at("orpo")), &TelemetryRow::avg_logp_rejected).back();
  o.require(pr < orr, "final rejected pr=" + num(pr) + " or=" + num(orr));
  return o;
}

Outcome reward_pipeline(const Workspace& ws) {
  Outcome o;
  const auto t0 = Clock::now();
  cli_or_throw({"reward-train", "--dataset", ws.corpus, "--out", ws.at("rm").string()});
  const double acc = json::parse(read_file(ws.at("rm") / "rm_metrics.json"))["heldout_accuracy"];
  o.require(acc > 0.8, "rm held-out accuracy " + num(acc));
  cli_or_throw({"winrate", "--dataset", ws.corpus, "--model-a", (ws.at("orpo") / "final.orpk").string(), "--model-b",
                (ws.at("sft") / "final.orpk").string(), "--rm", (ws.at("rm") / "rm.orpr").string(), "--rounds", "3",
                "--temperature", "1.0", "--out", ws.at("win").string()});
  const double elapsed = seconds_since(t0);
  const auto rep = json::parse(read_file(ws.at("win") / "winrate.json"));
  const double rate = rep["win_rate_a"];
  o.require(rate > 55.0, "win rate orpo vs sft " + num(rate) + "%");
  const double ra = rep["mean_reward_a"];
  const double rb = rep["mean_reward_b"];
  o.require(ra > rb, "mean reward orpo=" + num(ra) + " sft=" + num(rb));
  o.require(elapsed < 600.0, "runtime " + num(elapsed) + "s");
  return o;
}

Outcome diversity_algebra() {
  Outcome o;
  Rng rng = make_rng({9});
  auto random_vec = [&](Eigen::Index d) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = uniform_range(rng, -1, 1);
    return v;
  };
  const Eigen::VectorXd h = random_vec(6);
  const std::vector<Eigen::VectorXd> same(5, h);
  const auto d = diversity_d(same);
  o.require(std::abs(d.literal - 0.25) <= 1e-12, "identical literal=" + num(d.literal));
  o.require(std::abs(d.mean_cosine - 1.0) <= 1e-12, "identical mean_cosine=" + num(d.mean_cosine));

  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<Eigen::VectorXd>> groups(6);
    for (auto& g : groups)
      for (int j = 0; j < 4; ++j) g.push_back(random_vec(8));
    auto permuted = groups;
    for (auto& g : permuted) shuffle(g, rng);
    shuffle(permuted, rng);
    const auto pid_a = per_input_diversity_from_embeddings(groups).literal;
    const auto pid_b = per_input_diversity_from_embeddings(permuted).literal;
    const auto ws = diversity_d(groups.front());
    auto flipped = groups.front();
    std::reverse(flipped.begin(), flipped.end());
    worst = std::max({worst, std::abs(pid_a - pid_b), std::abs(ws.literal - diversity_d(flipped).literal)});
    std::vector<std::vector<Eigen::VectorXd>> firsts(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) firsts[i] = {groups[i].front()};
    auto firsts_perm = firsts;
    shuffle(firsts_perm, rng);
    worst = std::max(worst, std::abs(across_input_diversity_from_embeddings(firsts).literal -
                                     across_input_diversity_from_embeddings(firsts_perm).literal));
  }
  o.require(worst <= 1e-12, "permutation deviation " + num(worst));

  LMConfig cfg;
  cfg.vocab_size = 10;
  cfg.seed = 4;
  const TinyLM<double> model(cfg);
  std::vector<Tokens> prompts{{1, 2}, {3}, {4, 5, 6}, {7}};
  auto reversed = prompts;
  std::reverse(reversed.begin(), reversed.end());
  const DiversitySampling sampling{3, 1.0, 6, 0};
  const double pid_gap = std::abs(per_input_diversity(model, prompts, sampling, 2).literal -
                                  per_input_diversity(model, reversed, sampling, 2).literal);
  const double aid_gap = std::abs(across_input_diversity(model, prompts, sampling, 2).literal -
                                  across_input_diversity(model, reversed, sampling, 2).literal);
  o.require(pid_gap <= 1e-12 && aid_gap <= 1e-12, "sampled PID/AID prompt-order gap " + num(std::max(pid_gap, aid_gap)));
  return o;
}

Outcome determinism(const Workspace& ws) {
  Outcome o;
  const std::vector<std::vector<std::string>> commands{
      {"train", "--dataset", ws.corpus, "--loss", "orpo", "--lambda", "1", "--epochs", "2", "--eval-every", "50",
       "--out", ws.at("det_train").string()},
      {"sample-ratios", "--n", "20000", "--out", ws.at("det_ratios").string()},
      {"plot", "--telemetry", (ws.at("orpo") / "telemetry.csv").string(), "--out", ws.at("det_plot").string()},
      {"gradcheck", "--trials", "20", "--out", ws.at("det_grad").string()},
      {"diversity", "--dataset", ws.corpus, "--model", (ws.at("orpo") / "final.orpk").string(), "--out",
       ws.at("det_div").string()},
  };
  for (const auto& args : commands) {
    const fs::path dir = args.back();
    cli_or_throw(args);
    const auto first = directory_bytes(dir);
    cli_or_throw(args);
    const auto second = directory_bytes(dir);
    o.require(first == second, args.front() + " rerun identical over " + std::to_string(first.size()) + " files");
  }
  const auto model = load_checkpoint(ws.at("det_train") / "final.orpk");
  save_checkpoint(model, ws.at("roundtrip.orpk"));
  const bool bit_exact = read_file(ws.at("roundtrip.orpk")) == read_file(ws.at("det_train") / "final.orpk") &&
                         checkpoint_bytes(load_checkpoint(ws.at("roundtrip.orpk"))) == checkpoint_bytes(model);
  o.require(bit_exact, "checkpoint round trip bit-exact");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  Workspace ws;
  ws.root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "orpo_acceptance";
  fs::remove_all(ws.root);
  fs::create_directories(ws.root);
  ws.corpus = (ws.root / "corpus.jsonl").string();
  write_jsonl(make_synthetic_corpus(2000, 0), ws.corpus);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradient_correctness},
      {"2 closed-form loss values", closed_form_values},
      {"3 ratio study", ratio_study},
      {"4 SFT miscalibration", [&] { return sft_miscalibration(ws); }},
      {"5 ORPO dynamics", [&] { return orpo_dynamics(ws); }},
      {"6 lambda ablation", [&] { return lambda_ablation(ws); }},
      {"7 PR vs OR", [&] { return pr_vs_or(ws); }},
      {"8 reward pipeline", [&] { return reward_pipeline(ws); }},
      {"9 diversity algebra", diversity_algebra},
      {"10 determinism and formats", [&] { return determinism(ws); }},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << num(seconds_since(t0)) << "s) " << o.detail.str()
              << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
