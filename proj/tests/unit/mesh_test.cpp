#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "oracles/oracles.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/mesh/fr_estimate.hpp"
#include "wsm/mesh/parameters.hpp"
#include "wsm/mesh/serialize.hpp"
#include "wsm/mesh/weights.hpp"
#include "wsm/model/euler.hpp"
#include "wsm/model/gbm.hpp"
#include "wsm/model/simulate.hpp"

using namespace wsm;

namespace {

SdeModel walk_sde(double vol = 1.0) {
  SdeModel s;
  s.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  s.diffusion = [vol](std::span<const double>, std::span<double> out) { out[0] = vol; };
  return s;
}

SdeModel ou_sde(double theta, double vol) {
  SdeModel s;
  s.drift = [theta](std::span<const double> x, std::span<double> out) { out[0] = -theta * x[0]; };
  s.diffusion = [vol](std::span<const double>, std::span<double> out) { out[0] = vol; };
  return s;
}

/// PathSet with hand-placed states, d = 1.
PathSet fixed_paths(std::vector<std::vector<double>> by_step, double x0) {
  const std::size_t steps = by_step.size(), n = by_step.front().size();
  PathSet ps(n, steps, {x0}, 1.0, SeedRecord{0, 0});
  for (std::size_t l = 0; l < steps; ++l)
    for (std::size_t i = 0; i < n; ++i) ps.at(i, l + 1)[0] = by_step[l][i];
  return ps;
}

RewardFunction zero_reward() {
  return RewardFunction([](std::size_t, std::span<const double>) { return 0.0; }, 0.0, 0.0);
}

}  // namespace

TEST(CkDenominators, SinglePathIsItsOwnDensity) {
  const EulerChain chain(walk_sde(), 1.0);
  const PathSet ps = fixed_paths({{0.3}, {1.1}}, 0.0);
  const auto d = ck_denominators(ps, chain, 1);
  EXPECT_NEAR(d[0], std::log(oracle::normal_pdf(1.1, 0.3, 1.0)), 1e-14);
}

TEST(CkDenominators, IdenticalPathsScaleByN) {
  const EulerChain chain(walk_sde(), 1.0);
  const PathSet ps = fixed_paths({{0.4, 0.4, 0.4, 0.4}, {-0.2, -0.2, -0.2, -0.2}}, 0.0);
  const auto d = ck_denominators(ps, chain, 1);
  for (double v : d) EXPECT_NEAR(v, std::log(4.0 * oracle::normal_pdf(-0.2, 0.4, 1.0)), 1e-13);
}

TEST(CkDenominators, EstimatesExactMultistepDensity) {
  const double h = 0.25;
  const GbmModel gbm(0.08, 0.0, {0.2}, h);
  const std::vector<double> x0{100.0};
  const std::size_t n = 10000;
  const PathSet ps = simulate_paths(gbm, x0, 2, n, SeedRecord{8, 0});
  const auto d = ck_denominators(ps, gbm, 1);
  double ss = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double exact = oracle::lognormal_log_density(ps.at(j, 2)[0], 100.0, 0.08, 0.0, 0.2, 2 * h);
    const double rel = std::exp(d[j] - std::log(double(n)) - exact) - 1.0;
    ss += rel * rel;
  }
  EXPECT_LE(std::sqrt(ss / n), 5.0 / std::sqrt(double(n)));
}

TEST(CkDenominators, RejectsTerminalStep) {
  const EulerChain chain(walk_sde(), 1.0);
  const PathSet ps = fixed_paths({{0.3}, {1.1}}, 0.0);
  EXPECT_THROW(ck_denominators(ps, chain, 2), ConfigError);
}

TEST(WeightRow, SingleSuccessorGetsAllWeight) {
  const EulerChain chain(walk_sde(), 1.0);
  const PathSet ps = fixed_paths({{0.3}, {1.1}}, 0.0);
  const auto d = ck_denominators(ps, chain, 1);
  const WeightRow row = weight_row(ps, chain, 1, 0, d);
  ASSERT_EQ(row.weights.size(), 1u);
  EXPECT_DOUBLE_EQ(row.weights[0], 1.0);
}

TEST(WeightRow, CoincidentPathsGiveUniformWeights) {
  const EulerChain chain(walk_sde(), 1.0);
  const PathSet ps = fixed_paths({{0.4, 0.4, 0.4, 0.4, 0.4}, {1.0, 1.0, 1.0, 1.0, 1.0}}, 0.0);
  const auto d = ck_denominators(ps, chain, 1);
  for (std::size_t i = 0; i < 5; ++i) {
    const WeightRow row = weight_row(ps, chain, 1, i, d);
    for (double w : row.weights) EXPECT_NEAR(w, 0.2, 1e-15);
  }
}

TEST(WeightRow, ThreeByThreeHandComputation) {
  const EulerChain chain(walk_sde(), 1.0);
  const std::vector<double> from{-0.5, 0.2, 1.0}, to{-1.0, 0.5, 1.7};
  const PathSet ps = fixed_paths({from, to}, 0.0);
  const auto d = ck_denominators(ps, chain, 1);
  // p_ij = exp(-(to_j - from_i)^2 / 2) / sqrt(2 pi)
  double p[3][3], col[3] = {0, 0, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      p[i][j] = std::exp(-0.5 * (to[j] - from[i]) * (to[j] - from[i])) / std::sqrt(2 * oracle::kPi);
      col[j] += p[i][j];
    }
  for (int i = 0; i < 3; ++i) {
    double raw[3], total = 0.0;
    for (int j = 0; j < 3; ++j) total += (raw[j] = p[i][j] / col[j]);
    const WeightRow row = weight_row(ps, chain, 1, i, d);
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(row.weights[j], raw[j] / total, 1e-12);
      EXPECT_NEAR(row.log_numerators[j], std::log(raw[j]), 1e-12);
    }
  }
}

TEST(WeightRow, RowsSumToOneAndLieInUnitInterval) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.06);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 3, 400, SeedRecord{4, 0});
  const auto d = ck_denominators(ps, gbm, 2);
  for (std::size_t i = 0; i < ps.paths(); i += 7) {
    const WeightRow row = weight_row(ps, gbm, 2, i, d);
    double s = 0.0;
    for (double w : row.weights) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
      s += w;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Backward, NullRewardGivesZeroMesh) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.1);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 4, 50, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, zero_reward(), gbm);
  EXPECT_EQ(m.u0(), 0.0);
  for (std::size_t l = 0; l <= 4; ++l)
    for (double v : m.values_at(l)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, TerminalOnlyProblemReturnsReward) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.1);
  const std::vector<double> x0{90.0};
  const PathSet ps = simulate_paths(gbm, x0, 0, 10, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, put_reward(100.0, 0.08, 0.1), gbm, TruncationConfig(50.0));
  EXPECT_DOUBLE_EQ(m.u0(), 10.0);
}

TEST(Backward, MatchesNaiveRecursionGbm) {
  const double h = 0.2;
  const GbmModel gbm(0.08, 0.0, {0.25}, h);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 4, 60, SeedRecord{21, 0});
  const RewardFunction reward = put_reward(100.0, 0.08, h);
  for (double radius : {kInf, 15.0}) {
    const MeshValue m = backward_induction(ps, reward, gbm, radius == kInf ? TruncationConfig{} : TruncationConfig(radius));
    const auto naive = oracle::naive_mesh(
        ps, reward,
        [&](std::span<const double> y, std::span<const double> x) {
          return oracle::lognormal_log_density(y[0], x[0], 0.08, 0.0, 0.25, h);
        },
        radius);
    EXPECT_NEAR(m.u0(), naive.u0, 1e-12 * naive.u0);
    for (std::size_t l = 1; l <= 4; ++l)
      for (std::size_t n = 0; n < ps.paths(); ++n)
        EXPECT_NEAR(m.value(n, l), naive.values[l][n], 1e-12 * (1.0 + naive.values[l][n])) << l << "," << n;
  }
}

TEST(Backward, MatchesNaiveRecursionEuler) {
  const double h = 0.5;
  const EulerChain chain(ou_sde(0.8, 1.1), h);
  const std::vector<double> x0{0.5};
  const PathSet ps = simulate_paths(chain, x0, 3, 45, SeedRecord{22, 0});
  const RewardFunction reward = tent_reward(2.0);
  const MeshValue m = backward_induction(ps, reward, chain, TruncationConfig(2.5));
  const auto naive = oracle::naive_mesh(
      ps, reward,
      [&](std::span<const double> y, std::span<const double> x) {
        return std::log(oracle::normal_pdf(y[0], x[0] - 0.8 * x[0] * h, 1.21 * h));
      },
      2.5);
  EXPECT_NEAR(m.u0(), naive.u0, 1e-12);
  for (std::size_t l = 1; l <= 3; ++l)
    for (std::size_t n = 0; n < ps.paths(); ++n) {
      EXPECT_NEAR(m.value(n, l), naive.values[l][n], 1e-12);
      if (l < 3) EXPECT_NEAR(m.continuation(n, l), naive.continuation[l][n], 1e-12);
    }
}

TEST(Backward, MatchesNaiveRecursionTwoDimensions) {
  const double h = 0.3;
  Eigen::MatrixXd corr(2, 2);
  corr << 1.0, 0.3, 0.3, 1.0;
  const GbmModel gbm(0.05, 0.0, {0.2, 0.3}, h, corr);
  const std::vector<double> x0{100.0, 100.0};
  const PathSet ps = simulate_paths(gbm, x0, 3, 40, SeedRecord{23, 0});
  const RewardFunction reward = put_reward(100.0, 0.05, h);
  const MeshValue m = backward_induction(ps, reward, gbm);
  const auto naive = oracle::naive_mesh(
      ps, reward, [&](std::span<const double> y, std::span<const double> x) { return gbm.log_density(y, x); }, kInf);
  EXPECT_NEAR(m.u0(), naive.u0, 1e-12 * naive.u0);
}

TEST(Backward, InvariantsHoldOnPut) {
  const double h = 3.0 / 20;
  const GbmModel gbm(0.08, 0.0, {0.2}, h);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 20, 500, SeedRecord{5, 0});
  const RewardFunction reward = put_reward(100.0, 0.08, h);
  for (double radius : {kInf, 25.0}) {
    const MeshValue m = backward_induction(ps, reward, gbm, radius == kInf ? TruncationConfig{} : TruncationConfig(radius));
    const auto rep = check_mesh_invariants(m, ps, reward);
    EXPECT_EQ(rep.violations(), 0u);
    EXPECT_LE(rep.max_row_sum_error, 1e-12);
    ASSERT_TRUE(m.cap().has_value());
    EXPECT_EQ(*m.cap(), 100.0);
    if (radius != kInf)
      for (std::size_t l = 1; l <= 20; ++l)
        for (std::size_t n = 0; n < ps.paths(); ++n)
          if (std::abs(ps.at(n, l)[0] - 100.0) > radius) EXPECT_EQ(m.value(n, l), 0.0);
  }
}

TEST(Backward, InvariantCheckerCatchesCorruptedValues) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.1);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 3, 50, SeedRecord{5, 0});
  const RewardFunction reward = put_reward(100.0, 0.08, 0.1);
  MeshValue m = backward_induction(ps, reward, gbm, TruncationConfig(5.0));
  std::size_t outside = 0;
  for (std::size_t n = 0; n < 50; ++n)
    if (std::abs(ps.at(n, 2)[0] - 100.0) > 5.0) outside = n;
  m.mutable_values_at(2)[outside] = 1.0;
  m.mutable_values_at(3)[0] = 1000.0;
  const auto rep = check_mesh_invariants(m, ps, reward);
  EXPECT_GE(rep.outside_ball_nonzero, 1u);
  EXPECT_GE(rep.above_cap, 1u);
}

TEST(Backward, StepIsIdempotentGivenStoredValues) {
  const double h = 0.15;
  const GbmModel gbm(0.08, 0.0, {0.2}, h);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 6, 300, SeedRecord{6, 0});
  const RewardFunction reward = put_reward(100.0, 0.08, h);
  const MeshValue m = backward_induction(ps, reward, gbm, TruncationConfig(30.0));
  for (std::size_t l = 1; l < 6; ++l) {
    const auto again = mesh_step(ps, gbm, reward, m.truncation(), l, m.values_at(l + 1), m.log_denominators_at(l));
    for (std::size_t n = 0; n < ps.paths(); ++n) {
      EXPECT_EQ(again.values[n], m.value(n, l));
      EXPECT_EQ(again.continuation[n], m.continuation(n, l));
    }
  }
}

TEST(Backward, NegativeRewardIsRejected) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.1);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 2, 10, SeedRecord{1, 0});
  const RewardFunction bad([](std::size_t, std::span<const double>) { return -1.0; });
  EXPECT_THROW(backward_induction(ps, bad, gbm), RewardError);
}

TEST(Backward, GaussianWalkOracleAtModerateN) {
  // same instance as the acceptance run, at a size that keeps the unit suite quick
  const EulerChain chain(walk_sde(), 1.0);
  const std::vector<double> x0{3.0};
  const double exact = oracle::TentWalk(3.0, 1.0, 3).u0(3.0);
  const PathSet ps = simulate_paths(chain, x0, 3, 4000, SeedRecord{100, 0});
  const double u0 = backward_induction(ps, tent_reward(3.0), chain, TruncationConfig(10.0)).u0();
  EXPECT_LT(std::abs(u0 - exact) / exact, 0.05);
}

TEST(Truncation, BiasShrinksMonotonicallyInRadius) {
  const EulerChain chain(walk_sde(), 1.0);
  const std::vector<double> x0{3.0};
  const PathSet ps = simulate_paths(chain, x0, 3, 1500, SeedRecord{30, 0});
  const RewardFunction reward = tent_reward(3.0);
  const double full = backward_induction(ps, reward, chain).u0();
  double prev = kInf;
  for (double radius : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const double gap = std::abs(backward_induction(ps, reward, chain, TruncationConfig(radius)).u0() - full);
    EXPECT_LE(gap, prev);
    prev = gap;
  }
  // alpha = 1, L = 3: beyond 8 sqrt(alpha L) * 2 the gap is below any MC noise
  const double far = 16.0 * std::sqrt(3.0);
  EXPECT_EQ(backward_induction(ps, reward, chain, TruncationConfig(far)).u0(), full);
}

TEST(Truncation, RejectsNonPositiveRadius) {
  EXPECT_THROW(TruncationConfig(0.0), ConfigError);
  EXPECT_THROW(TruncationConfig(-1.0), ConfigError);
}

TEST(SelectParameters, HalvingAccuracyIncreasesBoth) {
  const ProblemConstants c{};
  const auto a = select_parameters(0.1, 1, 10, c), b = select_parameters(0.05, 1, 10, c);
  EXPECT_GT(b.radius, a.radius);
  EXPECT_GT(b.paths_exact, a.paths_exact);
}

TEST(SelectParameters, MatchesIndependentEvaluation) {
  // d = 1, L = 10, alpha = kappa = c_g = c_Z = 1, x0 = 0, eps = 0.1
  const double L = 10.0, eps = 0.1;
  const double growth = 1.0 + 1.0 + 0.0 + std::sqrt(L);
  const double arg = L * growth * std::pow(2.0, 1.25) / eps;
  const double radius = std::sqrt(8.0 * L * std::log(arg));
  const double paths = std::pow(8.0 * std::exp(1.0), 0.5) * std::pow(L, 3.5) / (eps * eps) * std::pow(std::log(arg), 1.5);
  const auto p = select_parameters(eps, 1, 10, ProblemConstants{});
  EXPECT_NEAR(p.radius, radius, 1e-12 * radius);
  EXPECT_NEAR(p.paths_exact, paths, 1e-10 * paths);
  EXPECT_EQ(p.paths, static_cast<std::size_t>(std::ceil(paths)));
}

TEST(SelectParameters, RadiusGrowsAtLeastLikeRootL) {
  const ProblemConstants c{};
  for (std::size_t L : {5u, 10u, 40u}) {
    const auto a = select_parameters(0.1, 1, L, c), b = select_parameters(0.1, 1, 2 * L, c);
    EXPECT_GE(b.radius, std::sqrt(2.0) * a.radius);
  }
}

TEST(SelectParameters, CoarseAccuracyIsRejected) {
  ProblemConstants c{};
  c.c_g = 1e-3;
  EXPECT_THROW(select_parameters(0.9, 1, 1, c), ParameterSelectionError);
  EXPECT_THROW(select_parameters(1.5, 1, 10, ProblemConstants{}), ParameterSelectionError);
  EXPECT_THROW(select_parameters(0.0, 1, 10, ProblemConstants{}), ParameterSelectionError);
}

TEST(FrEstimate, VanishingBallGivesZero) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.25);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 2, 2000, SeedRecord{3, 0});
  EXPECT_EQ(estimate_fr(ps, gbm, TruncationConfig(1e-9), 1).value, 0.0);
}

TEST(FrEstimate, MatchesTwoDimensionalQuadrature) {
  const double r = 0.08, sigma = 0.2, h = 0.25, x0v = 100.0, radius = 15.0;
  const GbmModel gbm(r, 0.0, {sigma}, h);
  const std::vector<double> x0{x0v};
  const PathSet ps = simulate_paths(gbm, x0, 2, 40000, SeedRecord{12, 0});
  const FrEstimate est = estimate_fr(ps, gbm, TruncationConfig(radius), 1);

  // E[1{|Y - x0| <= R} (p(Y|X) / p_2(Y|x0))^2], X ~ p_1(.|x0), Y ~ p_2(.|x0) independent
  using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
  const double mu = r - 0.5 * sigma * sigma, s = sigma * std::sqrt(h);
  auto inner = [&](double v) {
    const double y = std::exp(v);
    const double lp2 = oracle::lognormal_log_density(y, x0v, r, 0.0, sigma, 2 * h);
    auto f = [&](double u) {
      const double x = std::exp(u);
      const double lp1 = oracle::lognormal_log_density(x, x0v, r, 0.0, sigma, h) + u;  // density of log X
      const double lp = oracle::lognormal_log_density(y, x, r, 0.0, sigma, h);
      return std::exp(lp1 + 2.0 * (lp - lp2));
    };
    const double c = std::log(x0v) + mu * h;
    return GK::integrate(f, c - 12 * s, c + 12 * s, 12, 1e-12) * std::exp(lp2 + v);  // dv density of log Y
  };
  const double f2 = GK::integrate(inner, std::log(x0v - radius), std::log(x0v + radius), 12, 1e-10);
  const double se_sq = 2.0 * est.value * est.std_error;
  EXPECT_LT(std::abs(est.squared - f2), 3.0 * se_sq) << est.squared << " vs " << f2;
}

TEST(FrEstimate, NonDecreasingInRadius) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.25);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 3, 4000, SeedRecord{13, 0});
  double prev = 0.0;
  for (double radius : {2.0, 4.0, 8.0, 16.0, 32.0}) {
    const double v = estimate_fr(ps, gbm, TruncationConfig(radius), 2).value;
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(FrEstimate, EulerBeyondFirstStepNeedsExactDensity) {
  const EulerChain chain(walk_sde(), 1.0);
  const std::vector<double> x0{0.0};
  const PathSet ps = simulate_paths(chain, x0, 3, 100, SeedRecord{1, 0});
  EXPECT_NO_THROW(estimate_fr(ps, chain, TruncationConfig{}, 0));
  EXPECT_THROW(estimate_fr(ps, chain, TruncationConfig{}, 1), CapabilityError);
}

TEST(Serialize, RoundTripIsExact) {
  const GbmModel gbm(0.08, 0.0, {0.2}, 0.1);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 5, 80, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, put_reward(100.0, 0.08, 0.1), gbm, TruncationConfig(20.0));
  std::stringstream buf;
  write_mesh(buf, m);
  const MeshValue back = read_mesh(buf);
  EXPECT_TRUE(back == m);
  EXPECT_EQ(back.truncation().radius, 20.0);
}

TEST(Serialize, RejectsForeignBytes) {
  std::stringstream buf("definitely not a mesh artifact");
  EXPECT_THROW(read_mesh(buf), Error);
}
