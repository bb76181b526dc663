#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "orpo/checkpoint.hpp"
#include "orpo/optimizer.hpp"
#include "orpo/trainer.hpp"
#include "test_util.hpp"

namespace orpo {
namespace {

double epoch_mean(const std::vector<TelemetryRow>& rows, std::size_t epoch, double TelemetryRow::*field) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.epoch == epoch) {
      sum += r.*field;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

TEST(LrSchedule, Examples) {
  EXPECT_EQ(lr_at(0, 100, 1e-3, 0.1), 0.0);
  EXPECT_NEAR(lr_at(10, 100, 1e-3, 0.1), 1e-3, 1e-18);
  EXPECT_NEAR(lr_at(100, 100, 1e-3, 0.1), 0.0, 1e-12);
  EXPECT_NEAR(lr_at(5, 100, 1e-3, 0.1), 5e-4, 1e-18);
  EXPECT_NEAR(lr_at(55, 100, 1e-3, 0.1), 5e-4, 1e-15);
  EXPECT_THROW(lr_at(101, 100, 1e-3, 0.1), std::invalid_argument);
}

TEST(LrSchedule, MonotoneAfterWarmup) {
  double prev = lr_at(20, 200, 1.0, 0.1);
  for (std::size_t s = 21; s <= 200; ++s) {
    const double lr = lr_at(s, 200, 1.0, 0.1);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(LossKind, ParseRoundTrip) {
  for (auto k : {LossKind::kSft, LossKind::kOrpo, LossKind::kOrpoPr, LossKind::kDpo}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_loss_kind("ppo"), std::invalid_argument);
}

TEST(Telemetry, CsvRoundTripAndFormat) {
  std::vector<TelemetryRow> rows{{0, 0, 1.5, 0.6931471805599453, 2.1931471805599454, -1.25, -2.5, 1.0, 0.0},
                                 {1, 0, 1.0, 0.5, 1.5, -1.0, -3.0, 2.0, 1e-3}};
  std::ostringstream out;
  write_telemetry_csv(rows, out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), kTelemetryHeader);
  EXPECT_NE(text.find("0.693147181,"), std::string::npos);
  EXPECT_EQ(text.find('\r'), std::string::npos);
  std::istringstream in(text);
  const auto back = read_telemetry_csv(in);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].step, 1u);
  EXPECT_NEAR(back[0].l_or, rows[0].l_or, 1e-9);
  EXPECT_EQ(back[1].lr, 1e-3);
}

TEST(Telemetry, StrictHeader) {
  std::istringstream permuted("epoch,step,l_sft,l_or,l_total,avg_logp_chosen,avg_logp_rejected,log_odds_ratio,lr\n");
  EXPECT_THROW(read_telemetry_csv(permuted), std::invalid_argument);
  std::istringstream empty("");
  EXPECT_THROW(read_telemetry_csv(empty), std::invalid_argument);
  std::istringstream short_row(std::string(kTelemetryHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_telemetry_csv(short_row), std::invalid_argument);
  std::istringstream text_row(std::string(kTelemetryHeader) + "\n1,0,a,b,c,d,e,f,g\n");
  EXPECT_THROW(read_telemetry_csv(text_row), std::invalid_argument);
}

TEST(AdamW, ZeroGradientLeavesParametersUnchanged) {
  TinyLM<double> m(test::small_config());
  const auto before = checkpoint_bytes(m);
  auto g = m.zero_grads();
  AdamW opt;
  optimizer_step(m, g, opt, 1e-2);
  EXPECT_EQ(checkpoint_bytes(m), before);
}

TEST(AdamW, QuadraticSingleStep) {
  Eigen::VectorXd w(1), g(1);
  w << 1.0;
  g << 2.0 * w[0];
  std::vector<TensorRef> ps{{"w", Eigen::Map<Eigen::VectorXd>(w.data(), 1)}};
  std::vector<TensorRef> gs{{"w", Eigen::Map<Eigen::VectorXd>(g.data(), 1)}};
  AdamW opt;
  opt.step(ps, gs, 0.1);
  EXPECT_LT(w[0] * w[0], 1.0);
  EXPECT_NEAR(w[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-8), 1e-12);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, DecoupledWeightDecay) {
  Eigen::VectorXd w(2), g(2);
  w << 2.0, -4.0;
  g.setZero();
  std::vector<TensorRef> ps{{"w", Eigen::Map<Eigen::VectorXd>(w.data(), 2)}};
  std::vector<TensorRef> gs{{"w", Eigen::Map<Eigen::VectorXd>(g.data(), 2)}};
  AdamW opt({0.9, 0.999, 1e-8, 0.5});
  opt.step(ps, gs, 0.1);
  EXPECT_DOUBLE_EQ(w[0], 2.0 * 0.95);
  EXPECT_DOUBLE_EQ(w[1], -4.0 * 0.95);
}

TEST(AdamW, NonFiniteGradientNamesTensor) {
  TinyLM<double> m(test::small_config());
  const auto before = checkpoint_bytes(m);
  auto g = m.zero_grads();
  g.hidden_bias[2] = std::numeric_limits<double>::infinity();
  AdamW opt;
  try {
    optimizer_step(m, g, opt, 1e-2);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("hidden_bias"), std::string::npos);
  }
  EXPECT_EQ(checkpoint_bytes(m), before);
}

TEST(AdamW, ShapeMismatchThrows) {
  TinyLM<double> m(test::small_config(8));
  auto g = Params<double>::zeros(test::small_config(9));
  AdamW opt;
  EXPECT_THROW(optimizer_step(m, g, opt, 1e-2), std::invalid_argument);
}

TEST(AdamW, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    auto m = test::random_model(test::small_config(), 3);
    AdamW opt;
    const Tokens x{1, 2};
    const Tokens y{3, 4};
    for (int i = 0; i < 5; ++i) {
      auto g = m.zero_grads();
      backward_seq_logp(m, x, y, -1.0, g);
      optimizer_step(m, g, opt, 1e-2);
    }
    return checkpoint_bytes(m);
  };
  EXPECT_EQ(run(), run());
}

TEST(EvaluateTriple, SftMatchesOrpoWithZeroLambda) {
  const auto m = test::random_model(test::small_config(), 4);
  const PreferenceTriple t{{1}, {2, 3}, {4, 5, 6}};
  HyperParams<double> hp;
  hp.lambda = 0.7;
  const auto sft = evaluate_triple(m, t, LossKind::kSft, hp);
  hp.lambda = 0;
  const auto orpo = evaluate_triple(m, t, LossKind::kOrpo, hp);
  EXPECT_EQ(sft.report.l_total, orpo.report.l_total);
  EXPECT_EQ(sft.scale_w, -1.0);
  EXPECT_EQ(sft.scale_l, 0.0);
  EXPECT_EQ(orpo.scale_l, 0.0);
}

TEST(EvaluateTriple, DpoNeedsReference) {
  const auto m = test::random_model(test::small_config(), 4);
  const PreferenceTriple t{{1}, {2}, {3}};
  EXPECT_THROW(evaluate_triple(m, t, LossKind::kDpo, {}), std::invalid_argument);
  EXPECT_NEAR(evaluate_triple(m, t, LossKind::kDpo, {}, &m).report.l_total, std::log(2.0), 1e-12);
}

TEST(EvaluateTriple, SaturatedSideIsClampedWithoutOddsGradient) {
  auto m = test::random_model(test::small_config(), 4);
  m.params().output_bias[2] = 60.0;
  const PreferenceTriple t{{1}, {2}, {3}};
  HyperParams<double> hp;
  hp.lambda = 1.0;
  const auto o = evaluate_triple(m, t, LossKind::kOrpo, hp);
  EXPECT_EQ(o.chosen.avg_logp, hp.logp_clamp);
  EXPECT_EQ(o.scale_w, -1.0);
  EXPECT_GT(o.scale_l, 0.0);
  EXPECT_TRUE(std::isfinite(o.report.l_total));
}

class TrainerTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { data_ = new test::SyntheticData(test::synthetic_data(400, 3)); }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }

  static TrainConfig config(LossKind kind, double lambda) {
    TrainConfig c;
    c.loss_kind = kind;
    c.hp.lambda = lambda;
    c.epochs = 6;
    c.batch_size = 16;
    c.lr_max = 3e-3;
    c.seed = 5;
    return c;
  }

  static TinyLM<double> init() { return TinyLM<double>(test::model_config(data_->vocab, 2)); }

  static test::SyntheticData* data_;
};

test::SyntheticData* TrainerTest::data_ = nullptr;

TEST_F(TrainerTest, ZeroStepsReturnsInputModel) {
  auto cfg = config(LossKind::kOrpo, 1.0);
  cfg.max_steps = 0;
  const auto m = init();
  const auto res = train(m, data_->split, cfg);
  EXPECT_TRUE(res.telemetry.empty());
  EXPECT_EQ(checkpoint_bytes(res.model), checkpoint_bytes(m));
}

TEST_F(TrainerTest, MaxStepsCapsTraining) {
  auto cfg = config(LossKind::kOrpo, 1.0);
  cfg.max_steps = 7;
  const auto res = train(init(), data_->split, cfg);
  ASSERT_EQ(res.telemetry.size(), 7u);
  EXPECT_EQ(res.telemetry.front().lr, 0.0);
  for (std::size_t i = 0; i < res.telemetry.size(); ++i) EXPECT_EQ(res.telemetry[i].step, i);
}

TEST_F(TrainerTest, TelemetryIsSelfConsistent) {
  const auto res = train(init(), data_->split, config(LossKind::kOrpo, 1.0));
  for (const auto& r : res.telemetry) {
    EXPECT_TRUE(std::isfinite(r.l_total));
    EXPECT_NEAR(r.log_odds_ratio, log_odds(r.avg_logp_chosen) - log_odds(r.avg_logp_rejected), 1e-9);
    EXPECT_NEAR(r.l_total, r.l_sft + r.l_or, 1e-12);
  }
}

TEST_F(TrainerTest, SftAndZeroLambdaOrpoShareTrajectory) {
  const auto sft = train(init(), data_->split, config(LossKind::kSft, 1.0));
  const auto orpo0 = train(init(), data_->split, config(LossKind::kOrpo, 0.0));
  EXPECT_EQ(checkpoint_bytes(sft.model), checkpoint_bytes(orpo0.model));
  std::ostringstream a, b;
  write_telemetry_csv(sft.telemetry, a);
  write_telemetry_csv(orpo0.telemetry, b);
  EXPECT_EQ(a.str(), b.str());
}

TEST_F(TrainerTest, DeterministicTelemetry) {
  const auto a = train(init(), data_->split, config(LossKind::kOrpoPr, 1.0));
  const auto b = train(init(), data_->split, config(LossKind::kOrpoPr, 1.0));
  std::ostringstream sa, sb;
  write_telemetry_csv(a.telemetry, sa);
  write_telemetry_csv(b.telemetry, sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(checkpoint_bytes(a.model), checkpoint_bytes(b.model));
}

TEST_F(TrainerTest, OrpoIncreasesLogOddsRatio) {
  const auto res = train(init(), data_->split, config(LossKind::kOrpo, 1.0));
  const std::size_t last = res.telemetry.back().epoch;
  EXPECT_GT(epoch_mean(res.telemetry, last, &TelemetryRow::log_odds_ratio),
            epoch_mean(res.telemetry, 0, &TelemetryRow::log_odds_ratio));
}

TEST_F(TrainerTest, SftRaisesRejectedLikelihood) {
  const auto res = train(init(), data_->split, config(LossKind::kSft, 0.0));
  EXPECT_GT(res.telemetry.back().avg_logp_rejected, res.telemetry.front().avg_logp_rejected);
}

TEST_F(TrainerTest, DpoReferenceStaysFrozen) {
  const auto m = init();
  auto cfg = config(LossKind::kDpo, 0.0);
  cfg.epochs = 2;
  const auto res = train(m, data_->split, cfg);
  ASSERT_TRUE(res.reference.has_value());
  EXPECT_EQ(checkpoint_bytes(*res.reference), checkpoint_bytes(m));
  std::stringstream buf;
  write_checkpoint(m, buf);
  const auto reloaded = read_checkpoint(buf);
  const auto& t = data_->split.eval.front();
  EXPECT_EQ(seq_score(*res.reference, t.x, t.y_w).sum_logp, seq_score(reloaded, t.x, t.y_w).sum_logp);
  EXPECT_NE(checkpoint_bytes(res.model), checkpoint_bytes(m));
}

TEST_F(TrainerTest, PeriodicCheckpointsAndBestModel) {
  auto cfg = config(LossKind::kOrpo, 0.5);
  cfg.epochs = 2;
  cfg.eval_every = 10;
  const auto res = train(init(), data_->split, cfg);
  const std::size_t total = res.telemetry.size();
  ASSERT_FALSE(res.checkpoints.empty());
  EXPECT_EQ(res.checkpoints.back().step, total);
  EXPECT_EQ(res.checkpoints.size(), (total - 1) / 10 + 1);
  ASSERT_TRUE(res.best_eval_loss.has_value());
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : res.checkpoints) best = std::min(best, c.eval_loss);
  EXPECT_EQ(*res.best_eval_loss, best);
  EXPECT_NEAR(mean_loss(res.best_model, data_->split.eval, LossKind::kOrpo, cfg.hp), best, 1e-12);
}

TEST_F(TrainerTest, NonFiniteLossAborts) {
  auto m = init();
  m.params().output_bias[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(m, data_->split, config(LossKind::kOrpo, 1.0));
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.step(), 0u);
    EXPECT_EQ(e.batch(), 0u);
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
}

TEST_F(TrainerTest, InvalidConfigThrows) {
  auto cfg = config(LossKind::kOrpo, 1.0);
  cfg.lr_max = 0;
  EXPECT_THROW(train(init(), data_->split, cfg), std::invalid_argument);
  cfg = config(LossKind::kOrpo, 1.0);
  cfg.epochs = 0;
  EXPECT_THROW(train(init(), data_->split, cfg), std::invalid_argument);
}

TEST_F(TrainerTest, LambdaSweepSharesInitAndOrdersMargins) {
  auto cfg = config(LossKind::kOrpo, 0.0);
  const auto sweep = lambda_sweep(init(), data_->split, {0.0, 0.1, 1.0}, cfg);
  ASSERT_EQ(sweep.size(), 3u);
  const auto sft = train(init(), data_->split, config(LossKind::kSft, 0.0));
  std::ostringstream a, b;
  write_telemetry_csv(sweep[0].telemetry, a);
  write_telemetry_csv(sft.telemetry, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_GT(sweep[2].final_margin.margin, sweep[1].final_margin.margin);
  EXPECT_THROW(lambda_sweep(init(), data_->split, {}, cfg), std::invalid_argument);
}

TEST(HeldoutMargin, MatchesSeqScores) {
  const auto m = test::random_model(test::small_config(), 9);
  const std::vector<PreferenceTriple> data{{{1}, {2, 3}, {4}}, {{0}, {5}, {6, 1}}};
  const auto r = heldout_margin(m, data);
  const double c = 0.5 * (seq_score(m, data[0].x, data[0].y_w).avg_logp + seq_score(m, data[1].x, data[1].y_w).avg_logp);
  EXPECT_NEAR(r.avg_logp_chosen, c, 1e-12);
  EXPECT_NEAR(r.margin, r.avg_logp_chosen - r.avg_logp_rejected, 1e-15);
  EXPECT_THROW(heldout_margin(m, {}), std::invalid_argument);
}

}  // namespace
}  // namespace orpo
