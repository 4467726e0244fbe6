#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "bcot/oracle.hpp"
#include "bcot/simplex.hpp"
#include "bcot/transport.hpp"

using namespace bcot;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(xs.size());
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Northwest-corner plan on sorted supports; optimal for convex costs of x - y.
double monotone_ot(const Vec& p, const Vec& q, const Vec& xs, const Vec& ys) {
  int i = 0, j = 0;
  double a = p(0), b = q(0), total = 0;
  while (i < p.size() && j < q.size()) {
    const double m = std::min(a, b);
    total += m * (xs(i) - ys(j)) * (xs(i) - ys(j));
    a -= m;
    b -= m;
    if (a <= 1e-15 && ++i < p.size()) a = p(i);
    if (b <= 1e-15 && ++j < q.size()) b = q(j);
  }
  return total;
}

// Mass-weighted path cost of the independent coupling of the two chains.
double product_coupling_value(const DiscreteInstance& inst) {
  Mat joint = inst.init_mu * inst.init_mu_prime.transpose();
  double total = (joint.array() * inst.cost[0].array()).sum();
  for (int n = 1; n <= inst.horizon; ++n) {
    joint = inst.trans[n].transpose() * joint * inst.trans_prime[n];
    total += (joint.array() * inst.cost[n].array()).sum();
  }
  return total;
}

DiscreteInstance chain_pair(const Mat& t, const Mat& tp, const Vec& mu, const Vec& mup, int N) {
  DiscreteInstance inst;
  inst.horizon = N;
  const Vec g = Vec::LinSpaced(mu.size(), 0.0, mu.size() - 1.0);
  for (int n = 0; n <= N; ++n) {
    inst.grid.push_back(g);
    inst.grid_prime.push_back(g);
    inst.trans.push_back(n == 0 ? Mat() : t);
    inst.trans_prime.push_back(n == 0 ? Mat() : tp);
    Mat c(g.size(), g.size());
    for (int i = 0; i < g.size(); ++i)
      for (int j = 0; j < g.size(); ++j) c(i, j) = (g(i) - g(j)) * (g(i) - g(j));
    inst.cost.push_back(c);
  }
  inst.init_mu = mu;
  inst.init_mu_prime = mup;
  return inst;
}

}  // namespace

TEST(Transport, TwoByTwoHandCase) {
  Mat c(2, 2);
  c << 0, 1, 1, 0;
  const OtResult r = exact_discrete_ot(vec({0.5, 0.5}), vec({0.5, 0.5}), c);
  EXPECT_NEAR(r.value, 0.0, 1e-14);
  const OtResult s = exact_discrete_ot(vec({1.0, 0.0}), vec({0.3, 0.7}), c);
  EXPECT_NEAR(s.value, 0.7, 1e-14);
  const Mat plan = plan_to_dense(s.plan, 2, 2);
  EXPECT_NEAR(plan(0, 1), 0.7, 1e-14);
  EXPECT_NEAR(plan.sum(), 1.0, 1e-14);
}

TEST(Transport, MatchesMonotonePlanOnTheLine) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 7, k = 1 + trial % 5;
    Vec p(m), q(k), xs(m), ys(k);
    for (int i = 0; i < m; ++i) p(i) = u(rng), xs(i) = 4 * u(rng);
    for (int j = 0; j < k; ++j) q(j) = u(rng), ys(j) = 4 * u(rng);
    p /= p.sum();
    q /= q.sum();
    std::vector<int> pi(m), qi(k);
    std::iota(pi.begin(), pi.end(), 0);
    std::iota(qi.begin(), qi.end(), 0);
    std::sort(pi.begin(), pi.end(), [&](int a, int b) { return xs(a) < xs(b); });
    std::sort(qi.begin(), qi.end(), [&](int a, int b) { return ys(a) < ys(b); });
    Vec ps(m), xss(m), qs(k), yss(k);
    for (int i = 0; i < m; ++i) ps(i) = p(pi[i]), xss(i) = xs(pi[i]);
    for (int j = 0; j < k; ++j) qs(j) = q(qi[j]), yss(j) = ys(qi[j]);
    Mat c(m, k);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < k; ++j) c(i, j) = (xs(i) - ys(j)) * (xs(i) - ys(j));
    EXPECT_NEAR(exact_discrete_ot(p, q, c).value, monotone_ot(ps, qs, xss, yss), 1e-10);
  }
}

TEST(Transport, PlanIsFeasibleAndRejectsBadMarginals) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  Vec p(5), q(4);
  for (int i = 0; i < 5; ++i) p(i) = u(rng);
  for (int j = 0; j < 4; ++j) q(j) = u(rng);
  p /= p.sum();
  q /= q.sum();
  p(2) = 0;
  p /= p.sum();
  const Mat c = Mat::Random(5, 4).cwiseAbs();
  const OtResult r = exact_discrete_ot(p, q, c);
  const Mat plan = plan_to_dense(r.plan, 5, 4);
  EXPECT_LT((plan.rowwise().sum() - p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((plan.colwise().sum().transpose() - q).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GE(plan.minCoeff(), 0.0);
  EXPECT_NEAR((plan.array() * c.array()).sum(), r.value, 1e-12);
  EXPECT_THROW(exact_discrete_ot(vec({0.5, 0.5}), vec({0.9, 0.9}), Mat::Zero(2, 2)), std::invalid_argument);
  EXPECT_THROW(exact_discrete_ot(vec({1.5, -0.5}), vec({0.5, 0.5}), Mat::Zero(2, 2)), std::invalid_argument);
}

TEST(Simplex, HandSolvedProgram) {
  // min -x1 - x2  s.t.  x1 + 2 x2 <= 4,  3 x1 + x2 <= 6
  Mat A(2, 4);
  A << 1, 2, 1, 0, 3, 1, 0, 1;
  const LpResult r = solve_standard_lp(A, vec({4, 6}), vec({-1, -1, 0, 0}));
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.value, -2.8, 1e-12);
  EXPECT_NEAR(r.x(0), 1.6, 1e-12);
  EXPECT_NEAR(r.x(1), 1.2, 1e-12);
}

TEST(Simplex, StatusCases) {
  Mat A(1, 2);
  A << 1, 1;
  EXPECT_EQ(solve_standard_lp(A, vec({-1}), vec({1, 1})).status, LpStatus::Infeasible);
  A << 1, -1;
  EXPECT_EQ(solve_standard_lp(A, vec({0}), vec({-1, 0})).status, LpStatus::Unbounded);
  // duplicated equality rows
  Mat B(3, 3);
  B << 1, 1, 1, 1, 1, 1, 1, 0, 0;
  const LpResult r = solve_standard_lp(B, vec({1, 1, 0.25}), vec({0, 1, 2}));
  ASSERT_EQ(r.status, LpStatus::Optimal);
  EXPECT_NEAR(r.value, 0.75, 1e-12);
}

TEST(Dp, SingleStateChainsGiveSumOfCosts) {
  DiscreteInstance inst = random_instance(1, 3, 4);
  double total = 0;
  for (int n = 0; n <= 3; ++n) total += inst.cost[n](0, 0);
  EXPECT_NEAR(solve_dp(inst).value, total, 1e-14);
  EXPECT_NEAR(solve_pathspace_lp(inst), total, 1e-12);
}

TEST(Dp, IdenticalChainsHaveZeroValue) {
  Mat t(3, 3);
  t << 0.2, 0.5, 0.3, 0.6, 0.0, 0.4, 0.1, 0.1, 0.8;
  const Vec mu = vec({0.3, 0.3, 0.4});
  const DiscreteInstance inst = chain_pair(t, t, mu, mu, 2);
  EXPECT_NEAR(solve_dp(inst).value, 0.0, 1e-13);
  EXPECT_NEAR(solve_pathspace_lp(inst), 0.0, 1e-8);
}

TEST(Dp, ZeroLaterCostsReduceToPlainTransport) {
  DiscreteInstance inst = random_instance(4, 1, 9);
  inst.cost[1].setZero();
  EXPECT_NEAR(solve_dp(inst).value, exact_discrete_ot(inst.init_mu, inst.init_mu_prime, inst.cost[0]).value,
              1e-14);
}

TEST(Dp, AgreesWithPathSpaceLp) {
  for (int seed = 0; seed < 30; ++seed) {
    const int S = 2 + seed % 2;
    const int N = 1 + seed % 2;
    const DiscreteInstance inst = random_instance(S, N, 1000 + seed);
    const double dp = solve_dp(inst).value;
    const double lp = solve_pathspace_lp(inst);
    EXPECT_NEAR(dp, lp, 1e-9) << "seed " << seed;
    EXPECT_LE(dp, product_coupling_value(inst) + 1e-12);
  }
}

TEST(Dp, KeepsPlansWithTheRightMarginals) {
  const DiscreteInstance inst = random_instance(3, 2, 77);
  const DpResult r = solve_dp(inst, true);
  const Mat p0 = plan_to_dense(r.table.initial_plan, 3, 3);
  EXPECT_LT((p0.rowwise().sum() - inst.init_mu).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(r.table.plans.size(), 2u);
  const Mat p = plan_to_dense(r.table.plans[0][1 * 3 + 2], 3, 3);
  EXPECT_LT((p.rowwise().sum().transpose() - inst.trans[1].row(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((p.colwise().sum() - inst.trans_prime[1].row(2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Dp, LpRefusesLargeInstances) {
  EXPECT_THROW(solve_pathspace_lp(random_instance(4, 4, 1), 1000), std::invalid_argument);
}

TEST(Martingale, ClosedFormValue) {
  EXPECT_DOUBLE_EQ(martingale_subhedge_value(1, 5, 1.0, 2.0, 1.0, 0.5), 8.75);
  EXPECT_DOUBLE_EQ(martingale_subhedge_value(3, 5, 1.0, 2.0, 1.0, 0.5), 26.25);
  EXPECT_DOUBLE_EQ(martingale_subhedge_value(1, 2, 0.0, 0.0, 1.0, 1.0), 0.0);
}

TEST(Martingale, DiscretizationConvergesToClosedForm) {
  const double truth = martingale_subhedge_value(1, 3, 1.0, 2.0, 1.0, 0.5);
  double prev_err = 1e9;
  for (int S : {8, 16, 32}) {
    const DiscreteInstance inst = discretize_gaussian_martingale(3, 1.0, 2.0, 1.0, 0.5, S, 4.0);
    EXPECT_NO_THROW(inst.validate());
    const double err = std::abs(solve_dp(inst).value - truth) / truth;
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
  EXPECT_LT(prev_err, 0.02);
}

TEST(DiscreteInstance, JsonRoundTripAndValidation) {
  const DiscreteInstance inst = random_instance(3, 2, 5);
  const DiscreteInstance back = DiscreteInstance::from_json(inst.to_json());
  EXPECT_EQ(back.to_json(), inst.to_json());
  EXPECT_DOUBLE_EQ(solve_dp(back).value, solve_dp(inst).value);
  DiscreteInstance bad = inst;
  bad.trans[1](0, 0) += 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = inst;
  bad.init_mu(0) = -0.1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(DiscreteInstance, RandomInstancesHaveZeroTransitions) {
  const DiscreteInstance inst = random_instance(5, 3, 12);
  int zeros = 0;
  for (int n = 1; n <= 3; ++n) zeros += (inst.trans[n].array() == 0.0).count();
  EXPECT_GT(zeros, 0);
  EXPECT_NO_THROW(inst.validate());
}
