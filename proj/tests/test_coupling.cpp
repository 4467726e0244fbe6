#include <gtest/gtest.h>

#include <cmath>

#include "bcot/coupling.hpp"
#include "test_util.hpp"

using namespace bcot;

namespace {

void set_step(CouplingParams& p, int n, double mean1, double mean2, double std1, double std2, double rho) {
  const int d = p.dim();
  const BlockLayout l = step_layout(d, n);
  auto blk = p.block(n);
  blk.setZero();
  blk.segment(l.b1, d).setConstant(mean1);
  blk.segment(l.b2, d).setConstant(mean2);
  blk.segment(l.log_std1, d).setConstant(std::log(std1));
  blk.segment(l.log_std2, d).setConstant(std::log(std2));
  blk.segment(l.corr_raw, d).setConstant(std::atanh(rho / p.rho_max()));
}

const Vec kNone;

}  // namespace

TEST(Coupling, ParameterCountAndLayout) {
  EXPECT_EQ(CouplingParams::parameter_count(2, 3), 5 * 2 + 3 * (4 * 4 + 5 * 2));
  CouplingParams p(2, 3);
  EXPECT_EQ(p.size(), CouplingParams::parameter_count(2, 3));
  EXPECT_EQ(p.step_offset(0), 0);
  EXPECT_EQ(p.step_offset(1), 10);
  EXPECT_FALSE(step_layout(2, 0).has_weights());
  EXPECT_TRUE(step_layout(2, 1).has_weights());
}

TEST(Coupling, FlattenUnflattenRoundTrip) {
  const CouplingParams p = test_util::random_params(2, 2, 3);
  CouplingParams q(2, 2);
  q.unflatten(p.flatten());
  EXPECT_EQ(q.flatten(), p.flatten());
  EXPECT_THROW(q.unflatten(Vec::Zero(p.size() + 1)), ShapeError);
}

TEST(Coupling, ZeroParamsGiveIidStandardNormals) {
  CouplingParams p(1, 1);
  const Batch b = sample_coupling(p, 4000, 5, "t");
  std::vector<double> cols[4];
  for (const auto& t : b) {
    cols[0].push_back(t.y(0, 0));
    cols[1].push_back(t.y_prime(0, 0));
    cols[2].push_back(t.y(1, 0));
    cols[3].push_back(t.y_prime(1, 0));
  }
  const double se_var = std::sqrt(2.0 / 3999);
  for (auto& c : cols) {
    const MeanSe m = mean_and_se(c);
    EXPECT_LT(std::abs(m.mean), 4 * m.se);
    EXPECT_LT(std::abs(test_util::sample_variance(c) - 1.0), 4 * se_var);
  }
  std::vector<double> prod;
  for (std::size_t k = 0; k < cols[0].size(); ++k) prod.push_back(cols[0][k] * cols[1][k]);
  const MeanSe c = mean_and_se(prod);
  EXPECT_LT(std::abs(c.mean), 4 * c.se);
}

TEST(Coupling, CorrelationReachesRhoMax) {
  CouplingParams p = CouplingParams::identity_init(1, 2, 0.5);
  for (int n = 0; n <= 2; ++n) p.block(n).segment(step_layout(1, n).corr_raw, 1).setConstant(20.0);
  const Batch b = sample_coupling(p, 10000, 8, "t");
  std::vector<double> u, v;
  for (const auto& t : b) {
    u.push_back(t.y(2, 0) - t.y(1, 0));
    v.push_back(t.y_prime(2, 0) - t.y_prime(1, 0));
  }
  double su = 0, sv = 0, suv = 0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    su += u[k] * u[k];
    sv += v[k] * v[k];
    suv += u[k] * v[k];
  }
  const double r = suv / std::sqrt(su * sv);
  const double se = (1 - r * r) / std::sqrt(u.size() - 1.0);
  EXPECT_LT(std::abs(r - kDefaultRhoMax), 3 * se);
}

TEST(Coupling, ConditionalIndependenceWhenCorrZero) {
  const CouplingParams p = CouplingParams::identity_init(1, 1, 1.0);
  const Batch b = sample_coupling(p, 10000, 12, "t");
  std::vector<double> prod;
  for (const auto& t : b) prod.push_back((t.y(1, 0) - t.y(0, 0)) * (t.y_prime(1, 0) - t.y_prime(0, 0)));
  const MeanSe m = mean_and_se(prod);
  EXPECT_LT(std::abs(m.mean), 3 * m.se);
}

TEST(Coupling, SamplingIsReproducibleAndPrefixStable) {
  const CouplingParams p = test_util::random_params(2, 3, 1);
  const Batch a = sample_coupling(p, 10, 4, "x"), b = sample_coupling(p, 30, 4, "x");
  for (int k = 0; k < 10; ++k) {
    EXPECT_EQ(a[k].y, b[k].y);
    EXPECT_EQ(a[k].y_prime, b[k].y_prime);
  }
  EXPECT_EQ(sample_pair(p, std::uint64_t(3)).y, sample_pair(p, std::uint64_t(3)).y);
}

TEST(Coupling, JointLogDensityValues) {
  CouplingParams p(1, 1);
  const Vec z = Vec::Zero(1);
  EXPECT_NEAR(joint_logdensity(p, 1, z, z, z, z), -std::log(2 * M_PI), 1e-14);
  set_step(p, 1, 0, 0, 1, 1, 0.5);
  EXPECT_NEAR(joint_logdensity(p, 1, z, z, z, z), -std::log(2 * M_PI) - 0.5 * std::log(1 - 0.25), 1e-12);
}

TEST(Coupling, JointDensityIntegratesToOne) {
  CouplingParams p(1, 1);
  set_step(p, 1, 0.3, -0.2, 0.8, 1.3, 0.6);
  const Vec z = Vec::Zero(1);
  const double h = 0.02;
  double total = 0;
  for (double a = -10; a <= 10; a += h)
    for (double b = -12; b <= 12; b += h)
      total += std::exp(joint_logdensity(p, 1, z, z, Vec::Constant(1, a), Vec::Constant(1, b)));
  EXPECT_NEAR(total * h * h, 1.0, 1e-6);
}

TEST(Coupling, MarginalLogDensityValues) {
  CouplingParams p(1, 1);
  set_step(p, 1, 0, 0, 2, 1, 0.0);
  const Vec z = Vec::Zero(1);
  const double want = -std::log(2.0) - 0.5 * std::log(2 * M_PI) - 0.5;
  EXPECT_NEAR(marginal_logdensity(p, 1, z, z, Vec::Constant(1, 2.0), 1), want, 1e-14);
  for (double rho : {-0.9, 0.0, 0.4, 0.99}) {
    set_step(p, 1, 0, 0, 2, 1, rho);
    EXPECT_NEAR(marginal_logdensity(p, 1, z, z, Vec::Constant(1, 2.0), 1), want, 1e-14);
  }
}

TEST(Coupling, JointMinusMarginalIsConditional) {
  Rng rng = make_stream(2, "cond");
  for (int c = 0; c < 20; ++c) {
    const CouplingParams p = test_util::random_params(2, 2, 40 + c, 0.5);
    const Vec py = test_util::random_vec(2, rng), pyp = test_util::random_vec(2, rng);
    const Vec y = test_util::random_vec(2, rng), yp = test_util::random_vec(2, rng);
    const StepKernel k = p.kernel(2, py, pyp);
    // log density of y' given y, coordinatewise bivariate normal conditioning
    double cond = 0;
    for (int i = 0; i < 2; ++i) {
      const double m = k.mean2[i] + k.rho[i] * k.std2[i] / k.std1[i] * (y[i] - k.mean1[i]);
      const double s = k.std2[i] * std::sqrt(1 - k.rho[i] * k.rho[i]);
      cond += -std::log(s) - 0.5 * std::log(2 * M_PI) - 0.5 * (yp[i] - m) * (yp[i] - m) / (s * s);
    }
    const double diff = joint_logdensity(p, 2, py, pyp, y, yp) - marginal_logdensity(p, 2, py, pyp, y, 1);
    EXPECT_NEAR(diff, cond, 1e-10);
  }
}

TEST(Coupling, BiasScoreIsLocationScore) {
  CouplingParams p(1, 1);
  const Vec z = Vec::Zero(1);
  const Vec s = joint_score(p, 1, z, z, Vec::Constant(1, 1.0), z);
  const BlockLayout l = step_layout(1, 1);
  EXPECT_NEAR(s[l.b1], 1.0, 1e-14);
  EXPECT_NEAR(s[l.b2], 0.0, 1e-14);
}

TEST(Coupling, ScoresMatchFiniteDifferences) {
  Rng rng = make_stream(3, "fd");
  const double h = 1e-5;
  for (int c = 0; c < 100; ++c) {
    const int d = 1 + c % 3, N = 1 + c % 2, n = c % (N + 1);
    const CouplingParams p = test_util::random_params(d, N, 100 + c, 0.4);
    const Vec py = n > 0 ? test_util::random_vec(d, rng) : kNone;
    const Vec pyp = n > 0 ? test_util::random_vec(d, rng) : kNone;
    const Vec y = test_util::random_vec(d, rng), yp = test_util::random_vec(d, rng);
    const Vec sj = joint_score(p, n, py, pyp, y, yp);
    const Vec s1 = marginal_score(p, n, py, pyp, y, 1);
    const Vec s2 = marginal_score(p, n, py, pyp, yp, 2);
    const int off = p.step_offset(n);
    for (int k = 0; k < p.step_size(n); ++k) {
      CouplingParams a = p, b = p;
      a.mutable_theta()[off + k] += h;
      b.mutable_theta()[off + k] -= h;
      const double fj = (joint_logdensity(a, n, py, pyp, y, yp) - joint_logdensity(b, n, py, pyp, y, yp)) / (2 * h);
      const double f1 = (marginal_logdensity(a, n, py, pyp, y, 1) - marginal_logdensity(b, n, py, pyp, y, 1)) / (2 * h);
      const double f2 =
          (marginal_logdensity(a, n, py, pyp, yp, 2) - marginal_logdensity(b, n, py, pyp, yp, 2)) / (2 * h);
      EXPECT_LE(std::abs(fj - sj[k]), 1e-5 * std::max(1.0, std::abs(sj[k]))) << "config " << c << " k " << k;
      EXPECT_LE(std::abs(f1 - s1[k]), 1e-5 * std::max(1.0, std::abs(s1[k]))) << "config " << c << " k " << k;
      EXPECT_LE(std::abs(f2 - s2[k]), 1e-5 * std::max(1.0, std::abs(s2[k]))) << "config " << c << " k " << k;
    }
  }
}

TEST(Coupling, MarginalScoreSeparation) {
  Rng rng = make_stream(4, "sep");
  const CouplingParams p = test_util::random_params(2, 1, 5);
  const Vec py = test_util::random_vec(2, rng), pyp = test_util::random_vec(2, rng), v = test_util::random_vec(2, rng);
  const BlockLayout l = step_layout(2, 1);
  const Vec s1 = marginal_score(p, 1, py, pyp, v, 1);
  const Vec s2 = marginal_score(p, 1, py, pyp, v, 2);
  EXPECT_EQ(s1.segment(l.corr_raw, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s2.segment(l.corr_raw, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s1.segment(l.w2, 8).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s1.segment(l.b2, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s1.segment(l.log_std2, 2).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s2.segment(l.w1, 8).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s2.segment(l.b1, 2).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Coupling, ScoreIdentityHolds) {
  const CouplingParams p = test_util::random_params(1, 2, 77, 0.4);
  const Batch b = sample_coupling(p, 10000, 6, "score");
  const int n = 2, P = p.step_size(n);
  std::vector<std::vector<double>> joint(P), marg(P);
  for (const auto& t : b) {
    const Vec py = t.y.row(n - 1).transpose(), pyp = t.y_prime.row(n - 1).transpose();
    const Vec y = t.y.row(n).transpose(), yp = t.y_prime.row(n).transpose();
    const Vec s = joint_score(p, n, py, pyp, y, yp);
    const Vec m = marginal_score(p, n, py, pyp, y, 1);
    for (int k = 0; k < P; ++k) {
      joint[k].push_back(s[k]);
      marg[k].push_back(m[k]);
    }
  }
  for (int k = 0; k < P; ++k) {
    const MeanSe a = mean_and_se(joint[k]), c = mean_and_se(marg[k]);
    EXPECT_LE(std::abs(a.mean), 4 * a.se + 1e-15) << k;
    EXPECT_LE(std::abs(c.mean), 4 * c.se + 1e-15) << k;
  }
}

TEST(Coupling, PinnedStartIsPointMass) {
  Vec y0(2), y0p(2);
  y0 << 1.0, -1.0;
  y0p << 2.0, 0.5;
  const CouplingParams p = CouplingParams::identity_init_pinned(y0, y0p, 2);
  const TrajectoryPair t = sample_pair(p, std::uint64_t(1));
  EXPECT_EQ(Vec(t.y.row(0).transpose()), y0);
  EXPECT_EQ(Vec(t.y_prime.row(0).transpose()), y0p);
  EXPECT_THROW(joint_logdensity(p, 0, kNone, kNone, y0, y0p), DensityUnavailable);
  EXPECT_EQ(joint_score(p, 0, kNone, kNone, y0, y0p).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Coupling, CovarianceStaysPositiveDefinite) {
  CouplingParams p(1, 1);
  set_step(p, 1, 0, 0, 1, 1, 0.0);
  p.block(1)[step_layout(1, 1).corr_raw] = 1e6;
  const StepKernel k = p.kernel(1, Vec::Zero(1), Vec::Zero(1));
  EXPECT_GT(k.std1[0] * k.std1[0] * k.std2[0] * k.std2[0] * (1 - k.rho[0] * k.rho[0]), 0.0);
  EXPECT_TRUE(std::isfinite(joint_logdensity(p, 1, Vec::Zero(1), Vec::Zero(1), Vec::Zero(1), Vec::Ones(1))));
}
