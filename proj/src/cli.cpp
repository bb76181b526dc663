#include "orpo/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "orpo/analysis.hpp"
#include "orpo/checkpoint.hpp"
#include "orpo/gradcheck.hpp"
#include "orpo/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace orpo::cli {

json default_config() {
  return json{
      {"dataset", ""},        {"loss", "orpo"},         {"lambda", 0.1},      {"dpo_beta", 0.1},
      {"pr_beta", 1.0},       {"logp_clamp", -1e-6},    {"lr_max", 1e-3},     {"epochs", 10},
      {"batch_size", 32},     {"warmup_frac", 0.1},     {"seed", 0},          {"eval_every", 0},
      {"max_steps", -1},      {"embed_dim", 16},        {"hidden_dim", 32},   {"context_window", 4},
      {"min_count", 1},       {"tokenization", "whitespace"}, {"prompt_cap", 128}, {"max_len", 64},
      {"split", {0.8, 0.1, 0.1}}, {"rm_epochs", 1},     {"rm_batch_size", 16}, {"rm_lr_max", 1e-2},
      {"temperature", 1.0},   {"gen_max_len", 16},      {"rounds", 3},        {"k", 5},
  };
}

namespace {

constexpr const char* kSignedKeys[] = {"max_steps"};

bool is_signed_key(const std::string& key) {
  for (const char* k : kSignedKeys)
    if (key == k) return true;
  return false;
}

void check_field(const std::string& key, const json& value, const json& def) {
  auto fail = [&](const std::string& want) { throw ConfigError("config field '" + key + "': expected " + want); };
  if (def.is_string()) {
    if (!value.is_string()) fail("a string");
  } else if (def.is_number_integer()) {
    if (!value.is_number_integer()) fail("an integer");
    if (!is_signed_key(key) && value.get<long long>() < 0) fail("a non-negative integer");
  } else if (def.is_number()) {
    if (!value.is_number()) fail("a number");
  } else if (def.is_array()) {
    if (!value.is_array() || value.size() != def.size()) fail("an array of " + std::to_string(def.size()) + " numbers");
    for (const auto& v : value)
      if (!v.is_number()) fail("an array of numbers");
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Writes DIR/manifest.json before any other artifact.
void write_manifest(const fs::path& out_dir, const std::string& command, const std::string& config_path,
                    const json& resolved) {
  fs::create_directories(out_dir);
  const std::string bytes = resolved.dump();
  const std::uint64_t seed = resolved.contains("seed") ? resolved["seed"].get<std::uint64_t>() : 0;
  const std::uint64_t id = fnv1a(std::to_string(seed), fnv1a(bytes));
  write_json(out_dir / "manifest.json", json{{"command", command},
                                             {"config_path", config_path},
                                             {"config", resolved},
                                             {"run_id", hex64(id)},
                                             {"output_dir", out_dir.string()}});
}

std::vector<Tokens> prompts_of(const std::vector<PreferenceTriple>& data) {
  std::vector<Tokens> prompts;
  for (const auto& t : data) prompts.push_back(t.x);
  return prompts;
}

json stats_json(const DropStats& s) {
  return json{{"identical", s.identical}, {"empty", s.empty}, {"too_long", s.too_long}, {"kept", s.kept}};
}

json series_json(const SeriesStats& s) {
  return json{{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}, {"bins", s.histogram.counts.size()}};
}

json distribution_json(const RewardDistribution& d) {
  return json{{"mean", d.mean}, {"std", d.std}, {"deciles", d.deciles}, {"scores", d.scores}};
}

json diversity_json(const Diversity& d) { return json{{"literal", d.literal}, {"mean_cosine", d.mean_cosine}}; }

const std::vector<PreferenceTriple>& eval_prompts_source(const DatasetSplit& s) {
  return s.test.empty() ? s.eval : s.test;
}

void check_checkpoint_vocab(const TinyLM<double>& m, const Vocab& v, const std::string& what) {
  if (m.config().vocab_size != v.size()) {
    throw ConfigError(what + ": checkpoint vocabulary size " + std::to_string(m.config().vocab_size) +
                      " does not match dataset vocabulary size " + std::to_string(v.size()));
  }
}

/// Common options shared by the data-driven subcommands.
struct RunOptions {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> loss;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> eval_every;
  std::optional<long long> max_steps;
  std::string out;

  void attach(CLI::App* app, bool training) {
    app->add_option("--config", config, "flat JSON config file");
    app->add_option("--dataset", dataset, "JSONL preference data (overrides config)");
    app->add_option("--seed", seed, "run seed (overrides config and ORPO_KIT_SEED)");
    app->add_option("--out", out, "output directory")->required();
    if (training) {
      app->add_option("--loss", loss, "sft | orpo | orpo_pr | dpo");
      app->add_option("--lambda", lambda, "odds-ratio weight");
      app->add_option("--epochs", epochs);
      app->add_option("--lr", lr, "maximum learning rate");
      app->add_option("--batch-size", batch_size);
      app->add_option("--eval-every", eval_every, "evaluation/checkpoint interval in steps (0: end only)");
      app->add_option("--max-steps", max_steps, "cap on optimizer steps (-1: none)");
    }
  }

  json overrides() const {
    json o = json::object();
    if (dataset) o["dataset"] = *dataset;
    if (loss) o["loss"] = *loss;
    if (lambda) o["lambda"] = *lambda;
    if (seed) o["seed"] = *seed;
    if (epochs) o["epochs"] = *epochs;
    if (lr) o["lr_max"] = *lr;
    if (batch_size) o["batch_size"] = *batch_size;
    if (eval_every) o["eval_every"] = *eval_every;
    if (max_steps) o["max_steps"] = *max_steps;
    return o;
  }
};

json resolve_for(const RunOptions& o) {
  auto cfg = resolve_config(o.config, o.overrides());
  if (cfg["dataset"].get<std::string>().empty()) throw ConfigError("config field 'dataset': required");
  if (!fs::exists(cfg["dataset"].get<std::string>())) {
    throw ConfigError("config field 'dataset': file not found: " + cfg["dataset"].get<std::string>());
  }
  return cfg;
}

int cmd_train(const RunOptions& o, std::ostream& out, std::ostream& err) {
  const json cfg = resolve_for(o);
  const TrainConfig tc = train_config_from(cfg);
  const fs::path dir = o.out;
  write_manifest(dir, "train", o.config.value_or(""), cfg);
  auto data = prepare_data(cfg);
  err << "drop stats: " << stats_json(data.split.stats).dump() << '\n';
  write_json(dir / "drop_stats.json", stats_json(data.split.stats));
  const TinyLM<double> init(lm_config_from(cfg, data.vocab));
  TrainResult res;
  try {
    res = train(init, data.split, tc);
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << '\n';
    return kRuntime;
  }
  {
    std::ofstream csv(dir / "telemetry.csv", std::ios::binary);
    write_telemetry_csv(res.telemetry, csv);
  }
  for (const auto& c : res.checkpoints) save_checkpoint(c.model, dir / ("ckpt_" + std::to_string(c.step) + ".orpk"));
  save_checkpoint(res.model, dir / "final.orpk");
  save_checkpoint(res.best_model, dir / "best.orpk");
  json metrics{{"loss", to_string(tc.loss_kind)},
               {"steps", res.telemetry.size()},
               {"best_step", res.best_step},
               {"vocab_size", data.vocab.size()},
               {"parameters", init.params().size()}};
  if (res.best_eval_loss) metrics["best_eval_loss"] = *res.best_eval_loss;
  if (!data.split.eval.empty()) {
    const auto m = heldout_margin(res.model, data.split.eval);
    metrics["heldout"] = {{"avg_logp_chosen", m.avg_logp_chosen},
                          {"avg_logp_rejected", m.avg_logp_rejected},
                          {"margin", m.margin}};
  }
  write_json(dir / "metrics.json", metrics);
  out << "trained " << res.telemetry.size() << " steps (" << to_string(tc.loss_kind) << "), outputs in "
      << dir.string() << '\n';
  return kOk;
}

int cmd_lambda_sweep(const RunOptions& o, const std::vector<double>& lambdas, std::ostream& out, std::ostream& err) {
  const json cfg = resolve_for(o);
  TrainConfig tc = train_config_from(cfg);
  const fs::path dir = o.out;
  json manifest_cfg = cfg;
  manifest_cfg["lambdas"] = lambdas;
  write_manifest(dir, "lambda-sweep", o.config.value_or(""), manifest_cfg);
  auto data = prepare_data(cfg);
  const TinyLM<double> init(lm_config_from(cfg, data.vocab));
  std::vector<SweepEntry> sweep;
  try {
    sweep = lambda_sweep(init, data.split, lambdas, tc);
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << '\n';
    return kRuntime;
  }
  json report = json::array();
  for (const auto& e : sweep) {
    const std::string tag = fmt9(e.lambda);
    std::ofstream csv(dir / ("telemetry_lambda_" + tag + ".csv"), std::ios::binary);
    write_telemetry_csv(e.telemetry, csv);
    report.push_back({{"lambda", e.lambda},
                      {"avg_logp_chosen", e.final_margin.avg_logp_chosen},
                      {"avg_logp_rejected", e.final_margin.avg_logp_rejected},
                      {"margin", e.final_margin.margin}});
    out << "lambda=" << tag << " heldout margin=" << fmt9(e.final_margin.margin) << '\n';
  }
  write_json(dir / "sweep.json", json{{"runs", report}});
  return kOk;
}

int cmd_reward_train(const RunOptions& o, std::ostream& out, std::ostream&) {
  const json cfg = resolve_for(o);
  const fs::path dir = o.out;
  write_manifest(dir, "reward-train", o.config.value_or(""), cfg);
  auto data = prepare_data(cfg);
  LMConfig lc = lm_config_from(cfg, data.vocab);
  lc.seed += 1;
  const RewardModel init{TinyLM<double>(lc)};
  const auto res = train_reward(init, data.split, reward_config_from(cfg));
  save_reward_model(res.model, dir / "rm.orpr");
  write_json(dir / "rm_metrics.json", json{{"heldout_accuracy", res.heldout_accuracy},
                                           {"batches", res.batch_losses.size()},
                                           {"final_batch_loss", res.batch_losses.back()}});
  out << "reward model held-out accuracy " << fmt9(res.heldout_accuracy) << '\n';
  return kOk;
}

int cmd_winrate(const RunOptions& o, const std::string& a_path, const std::string& b_path,
                const std::string& rm_path, std::optional<std::size_t> rounds, std::optional<double> temperature,
                std::ostream& out) {
  json overrides = o.overrides();
  if (rounds) overrides["rounds"] = *rounds;
  if (temperature) overrides["temperature"] = *temperature;
  auto cfg = resolve_config(o.config, overrides);
  if (cfg["dataset"].get<std::string>().empty() || !fs::exists(cfg["dataset"].get<std::string>())) {
    throw ConfigError("config field 'dataset': file not found");
  }
  for (const auto& p : {a_path, b_path, rm_path}) {
    if (!fs::exists(p)) throw ConfigError("file not found: " + p);
  }
  const fs::path dir = o.out;
  json manifest_cfg = cfg;
  manifest_cfg["model_a"] = a_path;
  manifest_cfg["model_b"] = b_path;
  manifest_cfg["reward_model"] = rm_path;
  write_manifest(dir, "winrate", o.config.value_or(""), manifest_cfg);
  auto data = prepare_data(cfg);
  const auto a = load_checkpoint(a_path);
  const auto b = load_checkpoint(b_path);
  const auto rm = load_reward_model(rm_path);
  check_checkpoint_vocab(a, data.vocab, "model_a");
  check_checkpoint_vocab(b, data.vocab, "model_b");
  check_checkpoint_vocab(rm.backbone, data.vocab, "reward model");
  const auto prompts = prompts_of(eval_prompts_source(data.split));
  const SamplingOptions sampling{cfg["temperature"].get<double>(), cfg["gen_max_len"].get<std::size_t>(),
                                 data.vocab.eos_id()};
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  const auto rep = win_rate(a, b, prompts, rm, sampling, cfg["rounds"].get<std::size_t>(), seed);
  const auto dist_a = reward_distribution(a, prompts, rm, sampling, seed);
  const auto dist_b = reward_distribution(b, prompts, rm, sampling, seed);
  write_json(dir / "winrate.json", json{{"wins_a", rep.wins_a},
                                        {"wins_b", rep.wins_b},
                                        {"ties", rep.ties},
                                        {"comparisons", rep.comparisons},
                                        {"win_rate_a", rep.win_rate_a},
                                        {"win_rate_a_std", rep.win_rate_a_std},
                                        {"per_round_rates", rep.per_round_rates},
                                        {"rounds", rep.rounds},
                                        {"mean_reward_a", rep.mean_reward_a},
                                        {"mean_reward_b", rep.mean_reward_b},
                                        {"temperature", sampling.temperature},
                                        {"distribution_a", distribution_json(dist_a)},
                                        {"distribution_b", distribution_json(dist_b)}});
  std::ofstream csv(dir / "rewards.csv", std::ios::binary);
  csv << "prompt_id,round,model,reward\n";
  for (const auto& s : rep.scores) csv << s.prompt_id << ',' << s.round << ',' << s.model << ',' << fmt9(s.reward) << '\n';
  out << "win rate (a vs b): " << fmt9(rep.win_rate_a) << "% +- " << fmt9(rep.win_rate_a_std) << '\n';
  return kOk;
}

int cmd_diversity(const RunOptions& o, const std::string& model_path, std::optional<std::size_t> k,
                  std::optional<double> temperature, std::ostream& out) {
  json overrides = o.overrides();
  if (k) overrides["k"] = *k;
  if (temperature) overrides["temperature"] = *temperature;
  auto cfg = resolve_config(o.config, overrides);
  if (cfg["dataset"].get<std::string>().empty() || !fs::exists(cfg["dataset"].get<std::string>())) {
    throw ConfigError("config field 'dataset': file not found");
  }
  if (!fs::exists(model_path)) throw ConfigError("file not found: " + model_path);
  if (cfg["k"].get<std::size_t>() < 2) throw ConfigError("config field 'k': must be >= 2");
  const fs::path dir = o.out;
  json manifest_cfg = cfg;
  manifest_cfg["model"] = model_path;
  write_manifest(dir, "diversity", o.config.value_or(""), manifest_cfg);
  auto data = prepare_data(cfg);
  const auto model = load_checkpoint(model_path);
  check_checkpoint_vocab(model, data.vocab, "model");
  const auto prompts = prompts_of(eval_prompts_source(data.split));
  const DiversitySampling sampling{cfg["k"].get<std::size_t>(), cfg["temperature"].get<double>(),
                                   cfg["gen_max_len"].get<std::size_t>(), data.vocab.eos_id()};
  const auto embeddings = sample_response_embeddings(model, prompts, sampling, cfg["seed"].get<std::uint64_t>());
  const auto pid = per_input_diversity_from_embeddings(embeddings);
  const auto aid = across_input_diversity_from_embeddings(embeddings);
  for (const auto& d : {pid, aid}) {
    if (d.literal < -0.25 - 1e-12 || d.literal > 0.25 + 1e-12) {
      throw std::runtime_error("diversity outside [-1/4, 1/4]");
    }
  }
  write_json(dir / "diversity.json",
             json{{"per_input", diversity_json(pid)},
                  {"across_input", diversity_json(aid)},
                  {"k", sampling.k},
                  {"prompts", prompts.size()},
                  {"temperature", sampling.temperature},
                  {"embedding", "local substitute: L2-normalized mean hidden state of the evaluated model"},
                  {"notes",
                   {"'literal' applies 1/2 * sum_{i<j} cos / (N(N-1)); identical responses give 0.25",
                    "'mean_cosine' is the average pairwise cosine; identical responses give 1",
                    "across-input diversity uses the first of the K samples drawn per prompt"}}});
  out << "per-input literal=" << fmt9(pid.literal) << " mean_cosine=" << fmt9(pid.mean_cosine)
      << "; across-input literal=" << fmt9(aid.literal) << " mean_cosine=" << fmt9(aid.mean_cosine) << '\n';
  return kOk;
}

int cmd_gradcheck(std::optional<std::uint64_t> seed_opt, long long trials, const std::string& out_dir,
                  std::ostream& out) {
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  json cfg = resolve_config(std::nullopt, seed_opt ? json{{"seed", *seed_opt}} : json::object());
  GradCheckOptions opts;
  opts.trials = static_cast<std::size_t>(trials);
  opts.seed = cfg["seed"].get<std::uint64_t>();
  json manifest_cfg{{"seed", opts.seed}, {"trials", opts.trials}};
  if (!out_dir.empty()) write_manifest(out_dir, "gradcheck", "", manifest_cfg);
  const auto suites = run_gradcheck(opts);
  const json report = gradcheck_json(suites);
  if (!out_dir.empty()) write_json(fs::path(out_dir) / "gradcheck.json", report);
  bool ok = true;
  for (const auto& s : suites) {
    ok = ok && s.pass();
    out << (s.pass() ? "PASS " : "FAIL ") << s.name << " max_rel_err=" << fmt9(s.max_rel_err)
        << " tol=" << fmt9(s.tolerance) << " checks=" << s.checks;
    if (!s.pass()) out << " worst: " << s.worst_case;
    out << '\n';
  }
  return ok ? kOk : kCheckFailed;
}

int cmd_sample_ratios(long long n, std::optional<std::uint64_t> seed_opt, const std::string& out_dir,
                      std::ostream& out) {
  if (n < 2) throw ConfigError("--n must be >= 2");
  json cfg = resolve_config(std::nullopt, seed_opt ? json{{"seed", *seed_opt}} : json::object());
  const std::uint64_t seed = cfg["seed"].get<std::uint64_t>();
  const fs::path dir = out_dir;
  write_manifest(dir, "sample-ratios", "", json{{"seed", seed}, {"n", n}, {"betas", {0.2, 1.0}}});
  const auto count = static_cast<std::size_t>(n);
  const auto low = sample_ratio_distributions(count, 0.2, seed);
  const auto high = sample_ratio_distributions(count, 1.0, seed);
  struct Named {
    std::string name;
    const SeriesStats* stats;
    std::string color;
  };
  const std::vector<Named> series{{"pr_beta0.2", &low.log_pr, "#2ca02c"},
                                  {"pr_beta1", &high.log_pr, "#1f77b4"},
                                  {"or", &high.log_or, "#d62728"}};
  json summary{{"n_samples", count}, {"seed", seed}, {"bins", 200}};
  std::ofstream csv(dir / "ratios_hist.csv", std::ios::binary);
  csv << "series,bin_left,bin_right,count\n";
  std::vector<svg::HistogramSeries> plots;
  for (const auto& s : series) {
    summary["series"][s.name] = series_json(*s.stats);
    const auto& h = s.stats->histogram;
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      csv << s.name << ',' << fmt9(h.edges[b]) << ',' << fmt9(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
    }
    plots.push_back({s.name, h, s.color});
  }
  write_json(dir / "ratios.json", summary);
  write_text(dir / "ratios.svg", svg::histogram_overlay("Log probability ratio vs log odds ratio", "value", plots));
  out << "std: or=" << fmt9(high.log_or.std) << " pr_beta1=" << fmt9(high.log_pr.std)
      << " pr_beta0.2=" << fmt9(low.log_pr.std) << '\n';
  return kOk;
}

int cmd_plot(const std::string& telemetry_path, const std::string& out_dir, std::ostream& out) {
  std::ifstream in(telemetry_path, std::ios::binary);
  if (!in) throw ConfigError("cannot read telemetry file " + telemetry_path);
  std::vector<TelemetryRow> rows;
  try {
    rows = read_telemetry_csv(in);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = out_dir;
  write_manifest(dir, "plot", "", json{{"telemetry", telemetry_path}});
  svg::Series chosen{"chosen", {}, {}, "#1f77b4"};
  svg::Series rejected{"rejected", {}, {}, "#d62728"};
  svg::Series ratio{"log odds ratio", {}, {}, "#2ca02c"};
  for (const auto& r : rows) {
    const auto step = static_cast<double>(r.step);
    chosen.x.push_back(step);
    chosen.y.push_back(r.avg_logp_chosen);
    rejected.x.push_back(step);
    rejected.y.push_back(r.avg_logp_rejected);
    ratio.x.push_back(step);
    ratio.y.push_back(r.log_odds_ratio);
  }
  write_text(dir / "logprob.svg",
             svg::line_plot("Average log-likelihood per batch", "step", "avg log p", {chosen, rejected}));
  write_text(dir / "log_odds_ratio.svg", svg::line_plot("Log odds ratio per batch", "step", "log odds ratio", {ratio}));
  out << "plotted " << rows.size() << " rows\n";
  return kOk;
}

int cmd_make_corpus(std::size_t n, std::optional<std::uint64_t> seed_opt, const std::string& output,
                    std::ostream& out) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  json cfg = resolve_config(std::nullopt, seed_opt ? json{{"seed", *seed_opt}} : json::object());
  write_jsonl(make_synthetic_corpus(n, cfg["seed"].get<std::uint64_t>()), output);
  out << "wrote " << n << " triples to " << output << '\n';
  return kOk;
}

}  // namespace

nlohmann::json resolve_config(const std::optional<std::string>& config_path, const nlohmann::json& overrides,
                              std::string* raw_bytes) {
  json cfg = default_config();
  json file = json::object();
  if (config_path) {
    const std::string bytes = read_file(*config_path);
    if (raw_bytes) *raw_bytes = bytes;
    file = json::parse(bytes, nullptr, false);
    if (file.is_discarded() || !file.is_object()) throw ConfigError("config is not a JSON object: " + *config_path);
  }
  bool seed_set = false;
  for (const json* layer : std::initializer_list<const json*>{&file, &overrides}) {
    for (auto it = layer->begin(); it != layer->end(); ++it) {
      if (!cfg.contains(it.key())) throw ConfigError("config field '" + it.key() + "': unknown key");
      check_field(it.key(), it.value(), cfg[it.key()]);
      cfg[it.key()] = it.value();
      if (it.key() == "seed") seed_set = true;
    }
  }
  if (!seed_set) {
    if (const char* env = std::getenv("ORPO_KIT_SEED"); env != nullptr && *env != '\0') {
      try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        cfg["seed"] = v;
      } catch (const std::logic_error&) {
        throw ConfigError("ORPO_KIT_SEED is not an unsigned integer");
      }
    }
  }
  try {
    (void)parse_loss_kind(cfg["loss"].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'loss': ") + e.what());
  }
  const auto tok = cfg["tokenization"].get<std::string>();
  if (tok != "whitespace" && tok != "character") {
    throw ConfigError("config field 'tokenization': expected 'whitespace' or 'character'");
  }
  return cfg;
}

TrainConfig train_config_from(const json& cfg) {
  TrainConfig tc;
  tc.loss_kind = parse_loss_kind(cfg["loss"].get<std::string>());
  tc.hp.lambda = cfg["lambda"].get<double>();
  tc.hp.dpo_beta = cfg["dpo_beta"].get<double>();
  tc.hp.pr_beta = cfg["pr_beta"].get<double>();
  tc.hp.logp_clamp = cfg["logp_clamp"].get<double>();
  tc.lr_max = cfg["lr_max"].get<double>();
  tc.epochs = cfg["epochs"].get<std::size_t>();
  tc.batch_size = cfg["batch_size"].get<std::size_t>();
  tc.warmup_frac = cfg["warmup_frac"].get<double>();
  tc.seed = cfg["seed"].get<std::uint64_t>();
  tc.eval_every = cfg["eval_every"].get<std::size_t>();
  tc.max_steps = cfg["max_steps"].get<long long>();
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return tc;
}

LMConfig lm_config_from(const json& cfg, const Vocab& vocab) {
  LMConfig c;
  c.vocab_size = static_cast<std::uint32_t>(vocab.size());
  c.embed_dim = cfg["embed_dim"].get<std::uint32_t>();
  c.hidden_dim = cfg["hidden_dim"].get<std::uint32_t>();
  c.context_window = cfg["context_window"].get<std::uint32_t>();
  c.seed = static_cast<std::uint32_t>(cfg["seed"].get<std::uint64_t>());
  c.pad_id = vocab.pad_id();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

RewardTrainConfig reward_config_from(const json& cfg) {
  RewardTrainConfig rc;
  rc.epochs = cfg["rm_epochs"].get<std::size_t>();
  rc.batch_size = cfg["rm_batch_size"].get<std::size_t>();
  rc.lr_max = cfg["rm_lr_max"].get<double>();
  rc.seed = cfg["seed"].get<std::uint64_t>();
  if (rc.epochs < 1 || rc.batch_size < 1 || !(rc.lr_max > 0)) throw ConfigError("config: invalid reward settings");
  return rc;
}

PreparedData prepare_data(const json& cfg) {
  PreparedData d;
  d.load = load_jsonl(cfg["dataset"].get<std::string>());
  for (const auto& e : d.load.errors) std::cerr << "line " << e.line << ": " << e.message << '\n';
  for (const auto& w : d.load.warnings) std::cerr << "warning: " << w << '\n';
  if (d.load.rows.empty()) throw ConfigError("dataset has no valid rows");
  const auto mode = cfg["tokenization"].get<std::string>() == "character" ? Tokenization::kCharacter
                                                                           : Tokenization::kWhitespace;
  d.vocab = build_vocab(corpus_texts(d.load.rows), cfg["min_count"].get<std::size_t>(), mode);
  FilterOptions fo{cfg["prompt_cap"].get<std::size_t>(), cfg["max_len"].get<std::size_t>()};
  auto filtered = filter_and_tokenize(d.load.rows, d.vocab, fo);
  const auto fr = cfg["split"].get<std::vector<double>>();
  try {
    d.split = split(filtered.triples, {fr[0], fr[1], fr[2]}, cfg["seed"].get<std::uint64_t>());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config field 'split': ") + e.what());
  }
  d.split.stats = filtered.stats;
  return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Odds-ratio preference optimization toolkit", "orpo_kit"};
  app.require_subcommand(1);

  RunOptions train_opts, sweep_opts, rm_opts, win_opts, div_opts;
  auto* train_cmd = app.add_subcommand("train", "train a policy (sft, orpo, orpo_pr, dpo)");
  train_opts.attach(train_cmd, true);

  auto* sweep_cmd = app.add_subcommand("lambda-sweep", "ORPO runs over several lambda values from one init");
  sweep_opts.attach(sweep_cmd, true);
  std::vector<double> lambdas{0.1, 0.5, 1.0};
  sweep_cmd->add_option("--lambdas", lambdas, "comma-separated lambda values")->delimiter(',');

  auto* rm_cmd = app.add_subcommand("reward-train", "train the pairwise reward model");
  rm_opts.attach(rm_cmd, false);

  auto* win_cmd = app.add_subcommand("winrate", "reward-model win rate of model A over model B");
  win_opts.attach(win_cmd, false);
  std::string model_a, model_b, rm_path;
  std::optional<std::size_t> rounds;
  std::optional<double> win_temp;
  win_cmd->add_option("--model-a", model_a)->required();
  win_cmd->add_option("--model-b", model_b)->required();
  win_cmd->add_option("--rm", rm_path)->required();
  win_cmd->add_option("--rounds", rounds);
  win_cmd->add_option("--temperature", win_temp);

  auto* div_cmd = app.add_subcommand("diversity", "per-input and across-input diversity of sampled responses");
  div_opts.attach(div_cmd, false);
  std::string div_model;
  std::optional<std::size_t> div_k;
  std::optional<double> div_temp;
  div_cmd->add_option("--model", div_model)->required();
  div_cmd->add_option("--k", div_k, "samples per prompt");
  div_cmd->add_option("--temperature", div_temp);

  auto* grad_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradient suites");
  std::optional<std::uint64_t> grad_seed;
  long long trials = 100;
  std::string grad_out;
  grad_cmd->add_option("--seed", grad_seed);
  grad_cmd->add_option("--trials", trials);
  grad_cmd->add_option("--out", grad_out, "optional output directory");

  auto* ratio_cmd = app.add_subcommand("sample-ratios", "Monte-Carlo study of log probability / odds ratios");
  long long n_samples = 50000;
  std::optional<std::uint64_t> ratio_seed;
  std::string ratio_out;
  ratio_cmd->add_option("--n", n_samples);
  ratio_cmd->add_option("--seed", ratio_seed);
  ratio_cmd->add_option("--out", ratio_out)->required();

  auto* plot_cmd = app.add_subcommand("plot", "render telemetry CSV as SVG curves");
  std::string telemetry_path, plot_out;
  plot_cmd->add_option("--telemetry", telemetry_path)->required();
  plot_cmd->add_option("--out", plot_out)->required();

  auto* corpus_cmd = app.add_subcommand("make-corpus", "write the synthetic style corpus as JSONL");
  std::size_t corpus_n = 2000;
  std::optional<std::uint64_t> corpus_seed;
  std::string corpus_output;
  corpus_cmd->add_option("--n", corpus_n);
  corpus_cmd->add_option("--seed", corpus_seed);
  corpus_cmd->add_option("--output", corpus_output)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_opts, out, err);
    if (*sweep_cmd) return cmd_lambda_sweep(sweep_opts, lambdas, out, err);
    if (*rm_cmd) return cmd_reward_train(rm_opts, out, err);
    if (*win_cmd) return cmd_winrate(win_opts, model_a, model_b, rm_path, rounds, win_temp, out);
    if (*div_cmd) return cmd_diversity(div_opts, div_model, div_k, div_temp, out);
    if (*grad_cmd) return cmd_gradcheck(grad_seed, trials, grad_out, out);
    if (*ratio_cmd) return cmd_sample_ratios(n_samples, ratio_seed, ratio_out, out);
    if (*plot_cmd) return cmd_plot(telemetry_path, plot_out, out);
    if (*corpus_cmd) return cmd_make_corpus(corpus_n, corpus_seed, corpus_output, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}

}  // namespace orpo::cli
