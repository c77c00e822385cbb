#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <random>

#include "sctsim/stats/analysis.hpp"
#include "sctsim/stats/distributions.hpp"

using namespace sctsim;
using namespace sctsim::stats;

namespace {

// Dense marginal log-likelihood of a random-intercept model, written from
// V = sigma_e2 (I + theta Z Z') without any of the grouped shortcuts.
double dense_loglik(const DesignMatrix& d, const Eigen::VectorXd& beta, double theta, double sigma_e2) {
  const Eigen::Index n = d.rows();
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (d.group[static_cast<std::size_t>(i)] == d.group[static_cast<std::size_t>(j)]) V(i, j) += theta;
  V *= sigma_e2;
  const Eigen::LLT<Eigen::MatrixXd> llt(V);
  const Eigen::VectorXd r = d.y - d.X * beta;
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet + r.dot(llt.solve(r)));
}

DesignMatrix simulated(std::size_t groups, std::size_t per_group, double su, double se, std::uint32_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  DesignMatrix d;
  const auto n = static_cast<Eigen::Index>(groups * per_group);
  d.X.resize(n, 2);
  d.y.resize(n);
  d.names = {"(Intercept)", "x"};
  Eigen::Index i = 0;
  for (std::size_t g = 0; g < groups; ++g) {
    const double u = su * z(rng);
    for (std::size_t k = 0; k < per_group; ++k, ++i) {
      const double x = z(rng);
      d.X(i, 0) = 1.0;
      d.X(i, 1) = x;
      d.y(i) = 1.0 + 2.0 * x + u + se * z(rng);
      d.group.push_back(static_cast<long long>(g));
      d.t.push_back(static_cast<int>(k) + 1);
    }
  }
  return d;
}

ObservationTable synthetic_rows(const std::string& agent, int iterations, int rounds, std::uint32_t seed,
                                 double shift = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 0.1);
  ObservationTable t;
  for (int j = 1; j <= iterations; ++j)
    for (int r = 1; r <= rounds; ++r) {
      ObservationRow row;
      row.agent = agent;
      row.iteration = j;
      row.round = r;
      row.C = u(rng);
      row.reliability = u(rng);
      for (auto& v : row.x) v = u(rng);
      row.y = 1.0 + 2.0 * row.C + 0.5 * row.x[0] - 0.3 * row.x[3] + shift + z(rng);
      t.push_back(row);
    }
  return t;
}

RoundEffects effects_from(std::vector<int> rounds, std::array<std::vector<double>, kConstructCount> v) {
  RoundEffects e;
  e.rounds = std::move(rounds);
  e.value = std::move(v);
  for (std::size_t k = 0; k < kConstructCount; ++k) e.se[k].assign(e.rounds.size(), 0.1);
  return e;
}

}  // namespace

TEST(Distributions, GammaQMatchesBoost) {
  for (double a : {0.5, 1.0, 3.0, 6.5, 20.0})
    for (double x : {0.01, 0.5, 2.0, 5.0, 12.0, 40.0})
      EXPECT_NEAR(gamma_q(a, x), boost::math::gamma_q(a, x), 1e-12) << a << " " << x;
  EXPECT_EQ(gamma_q(2.0, 0.0), 1.0);
  EXPECT_THROW(gamma_q(0.0, 1.0), std::invalid_argument);
}

TEST(Distributions, ChiSquareTailMatchesBoost) {
  for (double df : {1.0, 3.0, 6.0, 12.0})
    for (double x : {0.3, 3.0, 10.18, 25.0}) {
      const boost::math::chi_squared dist(df);
      EXPECT_NEAR(chi2_sf(x, df), boost::math::cdf(boost::math::complement(dist, x)), 1e-12);
    }
  EXPECT_EQ(chi2_sf(-1.0, 3.0), 1.0);
}

TEST(Lrt, KnownStatisticAndIdenticalFits) {
  const auto r = likelihood_ratio_test(533.44, 733.35, 6);
  EXPECT_NEAR(r.lambda, 399.82, 1e-9);
  EXPECT_EQ(r.df, 6);
  EXPECT_LT(r.p, 1e-70);
  const auto same = likelihood_ratio_test(-500.0, -500.0, 6);
  EXPECT_EQ(same.lambda, 0.0);
  EXPECT_EQ(same.p, 1.0);
  EXPECT_THROW(likelihood_ratio_test(-1.0, -1.0, 0), std::invalid_argument);
}

TEST(Lmm, NoGroupVarianceReducesToOls) {
  // One observation per group: the random intercept is not identified
  // separately, and the ML optimum pushes theta to its lower bound.
  auto d = simulated(80, 1, 0.0, 0.5, 3);
  const auto f = fit_lmm(d);
  const Eigen::VectorXd ols = (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * d.y);
  EXPECT_NEAR(f.beta(0), ols(0), 1e-4);
  EXPECT_NEAR(f.beta(1), ols(1), 1e-4);
  const double rss = (d.y - d.X * ols).squaredNorm();
  EXPECT_NEAR(f.sigma_e2 + f.sigma_u2, rss / static_cast<double>(d.rows()), 1e-4);
}

TEST(Lmm, MatchesDenseLikelihoodAndIsItsMaximum) {
  const auto d = simulated(15, 4, 0.8, 0.5, 11);
  const auto f = fit_lmm(d);
  const double at_fit = dense_loglik(d, f.beta, f.theta, f.sigma_e2);
  EXPECT_NEAR(f.loglik, at_fit, 1e-6);
  for (double mult : {0.8, 1.25})
    EXPECT_LT(dense_loglik(d, f.beta, f.theta * mult, f.sigma_e2), at_fit);
  Eigen::VectorXd b = f.beta;
  b(1) += 0.05;
  EXPECT_LT(dense_loglik(d, b, f.theta, f.sigma_e2), at_fit);
  EXPECT_LT(dense_loglik(d, f.beta, f.theta, f.sigma_e2 * 1.1), at_fit);
}

TEST(Lmm, RecoversSimulatedParameters) {
  const auto f = fit_lmm(simulated(300, 5, 1.0, 0.5, 5));
  EXPECT_NEAR(f.beta(0), 1.0, 0.2);
  EXPECT_NEAR(f.beta(1), 2.0, 0.05);
  EXPECT_NEAR(f.sigma_u2, 1.0, 0.25);
  EXPECT_NEAR(f.sigma_e2, 0.25, 0.05);
  EXPECT_EQ(f.n_params, 4);
  EXPECT_EQ(f.n_groups, 300);
}

TEST(Lmm, RankDeficiencyNamesColumns) {
  auto d = simulated(10, 3, 0.5, 0.5, 2);
  d.X.conservativeResize(Eigen::NoChange, 3);
  d.X.col(2) = 2.0 * d.X.col(1);
  d.names.push_back("twice_x");
  try {
    fit_lmm(d);
    FAIL();
  } catch (const RankDeficiencyError& e) {
    EXPECT_NE(std::string(e.what()).find("twice_x"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("'x'"), std::string::npos);
    EXPECT_EQ(e.columns(), (std::vector<std::string>{"x", "twice_x"}));
  }
  d.X.col(2).setZero();
  EXPECT_THROW(fit_lmm(d), RankDeficiencyError);
}

TEST(Lmm, RejectsDegenerateInput) {
  auto d = simulated(1, 10, 0.5, 0.5, 2);
  EXPECT_THROW(fit_lmm(d), std::invalid_argument);
  d = simulated(2, 1, 0.5, 0.5, 2);
  EXPECT_THROW(fit_lmm(d), std::invalid_argument);
}

TEST(PerAgent, ExactLinearResponseGivesCoefficientTwo) {
  auto rows = synthetic_rows("a", 4, 5, 1);
  for (auto& r : rows) r.y = 2.0 * r.C;
  const auto t = per_agent_table(rows);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_NEAR(t[0].coefficient, 2.0, 1e-9);
  EXPECT_NEAR(t[0].r2, 1.0, 1e-9);
  EXPECT_EQ(t[0].n, 20u);
}

TEST(PerAgent, ConstantConstructColumnsAreDropped) {
  auto rows = synthetic_rows("vanilla", 5, 4, 2);
  for (auto& r : rows) r.x.fill(0.5);
  const auto t = per_agent_table(rows);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].dropped.size(), kConstructCount);
  EXPECT_NEAR(t[0].coefficient, 2.0, 0.2);
  EXPECT_LT(t[0].ci_lo, t[0].coefficient);
  EXPECT_GT(t[0].ci_hi, t[0].coefficient);
}

TEST(Invariance, DetectsAgentShift) {
  auto rows = synthetic_rows("a", 6, 5, 3);
  auto b = synthetic_rows("b", 6, 5, 4, 1.0);
  rows.insert(rows.end(), b.begin(), b.end());
  const auto inv = agent_invariance(rows);
  ASSERT_EQ(inv.dummy_beta.size(), 1u);
  EXPECT_NEAR(inv.dummy_beta[0], 1.0, 0.1);
  EXPECT_LT(inv.dummy_p[0], 1e-6);
  EXPECT_GT(inv.eta_squared, 0.3);

  auto same = synthetic_rows("a", 6, 5, 3);
  auto c = synthetic_rows("c", 6, 5, 4);
  same.insert(same.end(), c.begin(), c.end());
  EXPECT_LT(agent_invariance(same).eta_squared, 0.02);
  EXPECT_THROW(agent_invariance(synthetic_rows("a", 3, 3, 1)), std::invalid_argument);
}

TEST(Models, NestedFitsShareDesignAndLrtIsNonNegative) {
  auto rows = synthetic_rows("a", 8, 6, 5);
  auto b = synthetic_rows("b", 8, 6, 6);
  rows.insert(rows.end(), b.begin(), b.end());
  const auto m = fit_models(rows);
  EXPECT_EQ(m.model2.n_params - m.model1.n_params, 6);
  EXPECT_GE(m.lrt.lambda, -1e-9);
  EXPECT_EQ(m.lrt.df, 6);
  EXPECT_NEAR(m.model1.beta(m.model1.index_of("C")), 2.0, 0.1);
}

TEST(Pca, PlantedTwoFactorStructure) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd M(500, 6);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double f1 = z(rng), f2 = z(rng);
    for (Eigen::Index j = 0; j < 3; ++j) M(i, j) = f1 + 0.3 * z(rng);
    for (Eigen::Index j = 3; j < 6; ++j) M(i, j) = f2 + 0.3 * z(rng);
  }
  const auto p = pca_varimax(M, 2);
  EXPECT_NEAR(p.eigenvalues.sum(), 6.0, 1e-9);
  EXPECT_GT(p.cumulative(1), 0.85);
  // Each block loads on one rotated component only.
  const Eigen::Index first = std::abs(p.loadings(0, 0)) > std::abs(p.loadings(0, 1)) ? 0 : 1;
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_GT(std::abs(p.loadings(j, first)), 0.85);
    EXPECT_LT(std::abs(p.loadings(j, 1 - first)), 0.2);
    EXPECT_GT(std::abs(p.loadings(j + 3, 1 - first)), 0.85);
    EXPECT_LT(std::abs(p.loadings(j + 3, first)), 0.2);
  }
  for (std::size_t i = 1; i < p.criterion_history.size(); ++i)
    EXPECT_GE(p.criterion_history[i], p.criterion_history[i - 1] - 1e-12);
}

TEST(Pca, RotationIsOrthogonalAndPreservesCommunalities) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd M(200, 6);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double f = z(rng);
    for (Eigen::Index j = 0; j < 6; ++j) M(i, j) = (j % 2 ? f : -f) * 0.5 + z(rng);
  }
  const auto p = pca_varimax(M, 2);
  EXPECT_TRUE((p.rotation.transpose() * p.rotation).isApprox(Eigen::MatrixXd::Identity(2, 2), 1e-10));
  const Eigen::VectorXd h_rot = p.loadings.array().square().rowwise().sum();
  EXPECT_TRUE(h_rot.isApprox(p.communalities, 1e-10));
  EXPECT_TRUE((p.unrotated_loadings * p.rotation).cwiseAbs().isApprox(p.loadings.cwiseAbs(), 1e-10));
}

TEST(Pca, UncorrelatedDataHasFlatSpectrum) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd M(20000, 6);
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < 6; ++j) M(i, j) = z(rng) * static_cast<double>(j + 1);
  const auto p = pca_varimax(M, 2);
  for (Eigen::Index j = 0; j < 6; ++j) EXPECT_NEAR(p.eigenvalues(j), 1.0, 0.06);
  EXPECT_NEAR(p.cumulative(5), 1.0, 1e-12);
}

TEST(Bootstrap, ConstantSampleGivesDegenerateInterval) {
  const auto ci = bootstrap_ci(std::vector<double>(50, 0.37), 200, 0.95, 1);
  EXPECT_EQ(ci.mean, 0.37);
  EXPECT_EQ(ci.lo, 0.37);
  EXPECT_EQ(ci.hi, 0.37);
  EXPECT_THROW(bootstrap_ci({1.0}), std::invalid_argument);
  EXPECT_THROW(bootstrap_ci({1.0, 2.0}, 10, 1.5), std::invalid_argument);
}

TEST(Bootstrap, CoverageIsNearNominal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(3.0, 1.0);
  int covered = 0;
  const int trials = 300;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> s(60);
    for (auto& v : s) v = z(rng);
    const auto ci = bootstrap_ci(s, 400, 0.95, static_cast<std::uint64_t>(t));
    covered += ci.lo <= 3.0 && 3.0 <= ci.hi;
  }
  const double rate = static_cast<double>(covered) / trials;
  EXPECT_GT(rate, 0.88);
  EXPECT_LT(rate, 0.99);
}

TEST(Temporal, HandComputedSummary) {
  const auto s = temporal_summary({1, 2, 3}, {1.0, 2.0, 3.0});
  EXPECT_EQ(s.mean, 2.0);
  EXPECT_EQ(s.median, 2.0);
  EXPECT_NEAR(s.sd, 1.0, 1e-12);
  EXPECT_NEAR(s.se, 0.4, 1e-12);
  EXPECT_NEAR(s.se_conventional, 1.0 / std::sqrt(3.0), 1e-12);
  EXPECT_NEAR(s.ci_lo, 2.0 - 1.96 * 0.4, 1e-12);
  EXPECT_EQ(s.delta, 2.0);
  EXPECT_THROW(temporal_summary({1}, {1.0}), std::invalid_argument);
}

TEST(RoundEffectsTest, LinearInRoundWithDeltaMethodSe) {
  auto rows = synthetic_rows("a", 10, 5, 7);
  const auto m2 = fit_lmm(model2_design(rows));
  const auto e = round_effects(m2, rounds_of(rows));
  ASSERT_EQ(e.rounds, (std::vector<int>{1, 2, 3, 4, 5}));
  const auto b = m2.beta(m2.index_of("self_efficacy")), bt = m2.beta(m2.index_of("self_efficacy:round"));
  const auto k = static_cast<std::size_t>(std::find(kDesignOrder.begin(), kDesignOrder.end(),
                                                    Construct::SelfEfficacy) - kDesignOrder.begin());
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(e.value[k][r], b + bt * static_cast<double>(r + 1), 1e-12);
  EXPECT_NEAR(e.se[k][0] * e.se[k][0],
              m2.cov(m2.index_of("self_efficacy"), m2.index_of("self_efficacy")) +
                  m2.cov(m2.index_of("self_efficacy:round"), m2.index_of("self_efficacy:round")) +
                  2.0 * m2.cov(m2.index_of("self_efficacy"), m2.index_of("self_efficacy:round")),
              1e-12);
}

TEST(Sensitivity, PrefixMeansAndSignStability) {
  std::array<std::vector<double>, kConstructCount> v;
  for (auto& c : v) c = {1.0, 1.0, 1.0};
  v[1] = {1.0, -4.0, 1.0};
  const auto s = round_subset_sensitivity(effects_from({1, 2, 3}, v));
  EXPECT_EQ(s.mean[0], (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_EQ(s.mean[1], (std::vector<double>{1.0, -1.5, -2.0 / 3.0}));
  EXPECT_TRUE(s.sign_stable[0]);
  EXPECT_FALSE(s.sign_stable[1]);
}

TEST(Sensitivity, LeaveOneOutFindsInfluentialRound) {
  std::array<std::vector<double>, kConstructCount> v;
  for (std::size_t k = 0; k < kConstructCount; ++k)
    v[k] = std::vector<double>(4, 6.0 - static_cast<double>(k));
  const auto stable = leave_one_out(effects_from({1, 2, 3, 4}, v));
  EXPECT_TRUE(stable.ranking_preserved);
  EXPECT_EQ(stable.full_ranking, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));

  v[5] = {0.0, 0.0, 0.0, 40.0};  // one outlying round lifts the last construct to the top
  const auto l = leave_one_out(effects_from({1, 2, 3, 4}, v));
  EXPECT_EQ(l.largest_deviation_round[5], 4);
  EXPECT_EQ(l.full_mean[5], 10.0);
  EXPECT_EQ(l.mean[5][3], 0.0);
  EXPECT_FALSE(l.ranking_preserved);
  EXPECT_THROW(leave_one_out(effects_from({1}, {})), std::invalid_argument);
}
