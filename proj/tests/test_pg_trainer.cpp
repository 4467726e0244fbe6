#include <gtest/gtest.h>

#include <cmath>

#include "bcot/pg_trainer.hpp"
#include "test_util.hpp"

using namespace bcot;

namespace {

PerTrajectoryStats stats_with_step0(const CouplingParams& p, double v0, double score_norm) {
  PerTrajectoryStats st;
  st.v_hat = Vec::Zero(p.horizon() + 1);
  st.v_hat(0) = v0;
  st.s_hat = Vec::Zero(p.size());
  st.s_hat(p.step_offset(0)) = score_norm;
  return st;
}

TrainConfig small_config(int rounds) {
  TrainConfig cfg;
  cfg.beta = 5.0;
  cfg.batch_size = 32;
  cfg.rounds = rounds;
  cfg.schedule = StepSchedule::constant(1e-3);
  cfg.seed = 21;
  return cfg;
}

}  // namespace

TEST(StepSchedule, Values) {
  EXPECT_DOUBLE_EQ(step_size(StepSchedule::constant(0.01), 7), 0.01);
  EXPECT_DOUBLE_EQ(step_size(StepSchedule::poly_decay(1.0, 1.0), 4), 0.25);
  EXPECT_DOUBLE_EQ(step_size(StepSchedule::poly_decay(2.0, 0.5), 4), 1.0);
  EXPECT_DOUBLE_EQ(step_size(StepSchedule::inverse_k(3.0), 3), 1.0);
  EXPECT_THROW(step_size(StepSchedule::constant(0.01), 0), std::invalid_argument);
  EXPECT_THROW(StepSchedule::constant(-1.0).validate(), ConfigError);
  EXPECT_THROW(StepSchedule::poly_decay(0.0, 1.0).validate(), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.beta = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.features = BaselineFeatures::None;
  EXPECT_NO_THROW(cfg.validate());
  cfg.rounds = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(baseline_features_from_string("quadratic"), ConfigError);
}

TEST(PerTrajectory, SuffixSumsAndScores) {
  const CouplingParams p = test_util::random_params(1, 2, 4);
  TrajectoryPair t;
  t.y = Mat::Zero(3, 1);
  t.y_prime = Mat::Zero(3, 1);
  t.y_prime << 1, 2, 3;
  const PerTrajectoryStats st = per_trajectory_stats(p, CostSpec{}, &t, &t);
  ASSERT_EQ(st.v_hat.size(), 3);
  EXPECT_DOUBLE_EQ(st.v_hat(0), 14);
  EXPECT_DOUBLE_EQ(st.v_hat(1), 13);
  EXPECT_DOUBLE_EQ(st.v_hat(2), 9);
  const Vec s1 = joint_score(p, 1, t.y.row(0), t.y_prime.row(0), t.y.row(1), t.y_prime.row(1));
  EXPECT_LT((st.s_hat.segment(p.step_offset(1), p.step_size(1)) - s1).norm(), 1e-14);
  const Vec k2 = marginal_score(p, 2, t.y.row(1), t.y_prime.row(1), t.y.row(2), 1) +
                 marginal_score(p, 2, t.y.row(1), t.y_prime.row(1), t.y_prime.row(2), 2);
  EXPECT_LT((st.k_hat.segment(p.step_offset(2), p.step_size(2)) - k2).norm(), 1e-14);
  const PerTrajectoryStats only_gen = per_trajectory_stats(p, CostSpec{}, &t, nullptr);
  EXPECT_EQ(only_gen.k_hat.size(), 0);
}

TEST(ControlVariates, WeightedMeanAtStepZero) {
  const CouplingParams p(1, 1);
  Batch paths(2, TrajectoryPair{Mat::Zero(2, 1), Mat::Zero(2, 1)});
  std::vector<PerTrajectoryStats> st = {stats_with_step0(p, 1.0, 1.0), stats_with_step0(p, 3.0, 1.0)};
  EXPECT_DOUBLE_EQ(fit_control_variates(p, st, paths, BaselineFeatures::ConstantOnly).l0, 2.0);
  // weights ||S||^2 = 1 and 9
  st[1] = stats_with_step0(p, 3.0, 3.0);
  EXPECT_DOUBLE_EQ(fit_control_variates(p, st, paths, BaselineFeatures::ConstantOnly).l0, 2.8);
  st = {stats_with_step0(p, 1.0, 0.0), stats_with_step0(p, 3.0, 0.0)};
  const Baselines zero = fit_control_variates(p, st, paths, BaselineFeatures::LinearInState);
  EXPECT_DOUBLE_EQ(zero.l0, 0.0);
  EXPECT_EQ(zero.w[1].size(), 3);
  EXPECT_DOUBLE_EQ(zero.w[1].norm(), 0.0);
  EXPECT_DOUBLE_EQ(fit_control_variates(p, st, paths, BaselineFeatures::None).value(1, Vec::Ones(1), Vec::Ones(1)),
                   0.0);
}

TEST(ControlVariates, RecoversExactLinearTarget) {
  const int d = 2;
  const CouplingParams p(d, 1);
  Rng rng = make_stream(3, "cv");
  std::normal_distribution<double> z;
  Batch paths;
  std::vector<PerTrajectoryStats> st;
  Vec coef(1 + 2 * d);
  coef << 0.5, 1.0, -2.0, 0.25, 3.0;
  for (int b = 0; b < 40; ++b) {
    TrajectoryPair t{Mat::Zero(2, d), Mat::Zero(2, d)};
    for (int i = 0; i < d; ++i) {
      t.y(0, i) = z(rng);
      t.y_prime(0, i) = z(rng);
    }
    PerTrajectoryStats s;
    s.v_hat = Vec::Zero(2);
    s.v_hat(1) = coef.dot(baseline_feature_vector(BaselineFeatures::LinearInState, t.y.row(0), t.y_prime.row(0)));
    s.s_hat = Vec::Zero(p.size());
    s.s_hat.segment(p.step_offset(1), p.step_size(1)).setConstant(0.1 + std::abs(z(rng)));
    paths.push_back(t);
    st.push_back(s);
  }
  const Baselines bl = fit_control_variates(p, st, paths, BaselineFeatures::LinearInState);
  EXPECT_LT((bl.w[1] - coef).norm(), 1e-9);
}

TEST(Gradient, UnbiasedForSmoothObjective) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 1, 2);
  const CouplingParams p = test_util::random_params(1, 1, 8);
  const double beta = 2.0;
  const CostSpec cost;

  Rng rng = make_stream(5, "direction");
  Vec u = test_util::random_vec(p.size(), rng);
  u.normalize();

  const auto noise = test_util::noise_arrays(1, 1, 200000, 6);
  const Batch refs = simulate_pairs(*cfg.process(), *cfg.process_prime(), 200000, 7, "fd-ref");
  const double h = 1e-4;
  CouplingParams plus = p, minus = p;
  plus.mutable_theta() += h * u;
  minus.mutable_theta() -= h * u;
  const double fd = (test_util::crn_objective(plus, cost, *cfg.process(), *cfg.process_prime(), beta, noise, refs) -
                     test_util::crn_objective(minus, cost, *cfg.process(), *cfg.process_prime(), beta, noise, refs)) /
                    (2 * h);

  std::vector<double> proj, cv_mean;
  for (int r = 0; r < 400; ++r) {
    const RoundBatches rb = draw_round_batches(p, *cfg.process(), *cfg.process_prime(), 64, 100 + r, 1);
    const GradientEstimate g =
        estimate_gradient(p, cost, beta, BaselineFeatures::LinearInState, rb.gen, rb.aux, rb.ref);
    proj.push_back(u.dot(g.g));
    cv_mean.push_back(u.dot(g.l_cv));
  }
  const MeanSe m = mean_and_se(proj);
  EXPECT_LT(std::abs(m.mean - fd), 4 * m.se + 0.01 * std::abs(fd)) << "fd " << fd << " mean " << m.mean;
  const MeanSe c = mean_and_se(cv_mean);
  EXPECT_LT(std::abs(c.mean), 4 * c.se);
}

TEST(Gradient, AggregateIsSumOfTerms) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(2, 2, 2);
  const CouplingParams p = test_util::random_params(2, 2, 9);
  const RoundBatches rb = draw_round_batches(p, *cfg.process(), *cfg.process_prime(), 16, 3, 1);
  const GradientEstimate g = estimate_gradient(p, CostSpec{}, 3.0, BaselineFeatures::ConstantOnly, rb.gen, rb.aux, rb.ref);
  EXPECT_LT((g.g - (g.g_val + 3.0 * g.g_kl - g.l_cv)).norm(), 1e-10 * g.g.norm());
  double sq = 0;
  for (double s : g.step_norms) sq += s * s;
  EXPECT_NEAR(std::sqrt(sq), g.grad_norm, 1e-9 * g.grad_norm);
  const GradientEstimate none = estimate_gradient(p, CostSpec{}, 3.0, BaselineFeatures::None, rb.gen, {}, rb.ref);
  EXPECT_DOUBLE_EQ(none.l_cv.norm(), 0.0);
  EXPECT_LT((none.g_val - g.g_val).norm(), 1e-12 * g.g_val.norm());
}

TEST(Train, ZeroRoundsLeavesInitUnchanged) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 2, 2);
  const CouplingParams init = CouplingParams::identity_init(1, 2);
  const TrainResult r = train(small_config(0), init, CostSpec{}, *cfg.process(), *cfg.process_prime());
  EXPECT_EQ(r.params.flatten(), init.flatten());
  EXPECT_TRUE(r.history.empty());
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 2, 2);
  const CouplingParams init = CouplingParams::identity_init(1, 2);
  const TrainResult full = train(small_config(6), init, CostSpec{}, *cfg.process(), *cfg.process_prime());
  const TrainResult head = train(small_config(3), init, CostSpec{}, *cfg.process(), *cfg.process_prime());
  const TrainResult tail = train(small_config(6), head.params, CostSpec{}, *cfg.process(), *cfg.process_prime(), 4);
  EXPECT_EQ(full.params.flatten(), tail.params.flatten());
  ASSERT_EQ(tail.history.size(), 3u);
  EXPECT_EQ(tail.history.front().round, 4);
  EXPECT_EQ(history_csv_row(full.history[4]).substr(0, 40), history_csv_row(tail.history[1]).substr(0, 40));
}

TEST(Train, ReducesObjectiveOnGaussianAr1) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 2, 2);
  const CouplingParams init = CouplingParams::identity_init(1, 2);
  TrainConfig tc = small_config(300);
  tc.batch_size = 128;
  const auto before = evaluate_objective(init, CostSpec{}, *cfg.process(), *cfg.process_prime(), tc.beta, 4000, 9);
  const TrainResult r = train(tc, init, CostSpec{}, *cfg.process(), *cfg.process_prime());
  const auto after = evaluate_objective(r.params, CostSpec{}, *cfg.process(), *cfg.process_prime(), tc.beta, 4000, 9);
  EXPECT_LT(*after.j_beta, 0.5 * *before.j_beta);
}

TEST(Train, CheckpointCadenceAndHistory) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 1, 2);
  TrainConfig tc = small_config(7);
  tc.eval_every = 3;
  tc.eval_batch = 64;
  std::vector<int> seen;
  const TrainResult r = train(tc, CouplingParams::identity_init(1, 1), CostSpec{}, *cfg.process(),
                              *cfg.process_prime(), 1, [&](int k, const CouplingParams&, const History& h) {
                                seen.push_back(k);
                                EXPECT_EQ(static_cast<int>(h.size()), k);
                              });
  EXPECT_EQ(seen, (std::vector<int>{3, 6, 7}));
  ASSERT_EQ(r.history.size(), 7u);
  EXPECT_TRUE(r.history[2].report.has_value());
  EXPECT_FALSE(r.history[3].report.has_value());
  EXPECT_TRUE(r.history[0].j_beta.has_value());
  EXPECT_EQ(history_csv_header(), "round,eta,j_val,j_kl,j_beta,grad_norm,wallclock_ms");
}

TEST(Train, DivergenceAborts) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(2, 3, 2);
  TrainConfig tc = small_config(200);
  tc.beta = 50;
  tc.schedule = StepSchedule::constant(10.0);
  try {
    train(tc, CouplingParams::identity_init(2, 3), CostSpec{}, *cfg.process(), *cfg.process_prime());
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_GE(e.round(), 1);
    EXPECT_EQ(static_cast<int>(e.history().size()), e.round() - 1);
  }
}

TEST(Train, ShapeMismatchThrows) {
  const Ar1Config cfg = Ar1Config::gaussian_unimodal(1, 2, 2);
  EXPECT_THROW(train(small_config(1), CouplingParams::identity_init(2, 2), CostSpec{}, *cfg.process(),
                     *cfg.process_prime()),
               ShapeError);
}
