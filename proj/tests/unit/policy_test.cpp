#include <gtest/gtest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>
#include <vector>

#include "oracles/oracles.hpp"
#include "wsm/baseline/reference.hpp"
#include "wsm/mesh/backward.hpp"
#include "wsm/model/euler.hpp"
#include "wsm/model/gbm.hpp"
#include "wsm/model/simulate.hpp"
#include "wsm/policy/continuation.hpp"
#include "wsm/policy/lower_bound.hpp"
#include "wsm/policy/neighbours.hpp"

using namespace wsm;

namespace {

constexpr double kRate = 0.08, kSigma = 0.2, kStrike = 100.0, kMaturity = 3.0, kTruePrice = 6.9320;

struct PutSetup {
  std::size_t steps;
  double h;
  GbmModel model;
  RewardFunction reward;
  std::vector<double> x0;
  PathSet paths;
  MeshValue mesh;

  PutSetup(std::size_t l, std::size_t n, std::uint64_t seed, double s0 = 100.0)
      : steps(l), h(kMaturity / l), model(kRate, 0.0, {kSigma}, h), reward(put_reward(kStrike, kRate, h)), x0{s0},
        paths(simulate_paths(model, x0, l, n, SeedRecord{seed, 0})),
        mesh(backward_induction(paths, reward, model)) {}
};

RewardFunction zero_reward() {
  return RewardFunction([](std::size_t, std::span<const double>) { return 0.0; }, 0.0, 0.0);
}

std::vector<std::size_t> brute_knn(const std::vector<double>& pts, std::size_t dim, std::span<const double> x,
                                   std::size_t k) {
  const std::size_t n = pts.size() / dim;
  std::vector<std::pair<double, std::size_t>> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) s += (pts[i * dim + c] - x[c]) * (pts[i * dim + c] - x[c]);
    d[i] = {s, i};
  }
  std::sort(d.begin(), d.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(d[i].second);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Neighbours, ExactAgainstBruteForce) {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> nd;
  for (std::size_t dim : {1u, 2u, 3u, 8u, 20u}) {
    const std::size_t n = 700;
    std::vector<double> pts(n * dim);
    for (double& v : pts) v = nd(eng);
    const NearestNeighbours index(StateView(pts, n, dim));
    for (int q = 0; q < 25; ++q) {
      std::vector<double> x(dim);
      for (double& v : x) v = 1.5 * nd(eng);
      for (std::size_t k : {1u, 7u, 64u, 700u}) {
        auto got = index.query(x, k);
        ASSERT_EQ(got.size(), k);
        std::sort(got.begin(), got.end());
        EXPECT_EQ(got, brute_knn(pts, dim, x, k)) << "dim " << dim << " k " << k;
      }
    }
  }
}

TEST(Neighbours, TiesBreakDeterministically) {
  const std::vector<double> pts{1.0, -1.0, 1.0, 3.0};
  const NearestNeighbours index(StateView(pts, 4, 1));
  const std::vector<double> x{0.0};
  const auto a = index.query(x, 2), b = index.query(x, 2);
  EXPECT_EQ(a, b);
  // distance ties at 1.0: lower coordinate first, then lower index
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0], 1u);
  EXPECT_EQ(a[1], 0u);
}

TEST(Neighbours, TooManyNeighboursIsAConfigError) {
  const std::vector<double> pts{1.0, 2.0};
  const NearestNeighbours index(StateView(pts, 2, 1));
  const std::vector<double> x{0.0};
  EXPECT_THROW(index.query(x, 3), ConfigError);
}

TEST(Continuation, NullValuesGiveZero) {
  const double h = 0.3;
  const GbmModel gbm(kRate, 0.0, {kSigma}, h);
  const std::vector<double> x0{100.0};
  const PathSet ps = simulate_paths(gbm, x0, 5, 100, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, zero_reward(), gbm);
  const auto est = ContinuationEstimator<GbmModel>::direct(ps, m, gbm);
  for (double s : {80.0, 100.0, 130.0}) {
    const std::vector<double> x{s};
    for (std::size_t l = 0; l < 5; ++l) EXPECT_EQ(est(l, x), 0.0);
  }
}

TEST(Continuation, DirectAtTrainingPointEqualsMeshRow) {
  const PutSetup s(8, 300, 2);
  const auto est = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  for (std::size_t l = 1; l < 8; ++l)
    for (std::size_t i = 0; i < 300; i += 13) EXPECT_EQ(est(l, s.paths.at(i, l)), s.mesh.continuation(i, l));
  EXPECT_NEAR(est(0, s.x0), s.mesh.continuation(0, 0), 1e-12 * s.mesh.continuation(0, 0));
}

TEST(Continuation, DirectMatchesQuadratureOnGaussianWalk) {
  SdeModel sde;
  sde.drift = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  sde.diffusion = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  const EulerChain chain(sde, 1.0);
  const std::vector<double> x0{3.0};
  const PathSet ps = simulate_paths(chain, x0, 3, 50000, SeedRecord{100, 0});
  const MeshValue m = backward_induction(ps, tent_reward(3.0), chain, TruncationConfig(10.0));
  const auto est = ContinuationEstimator<EulerChain>::direct(ps, m, chain);
  const oracle::TentWalk exact(3.0, 1.0, 3);
  int probes = 0;
  for (std::size_t l : {1u, 2u})
    for (double x : {1.5, 2.25, 3.0, 3.75, 4.5}) {
      const std::vector<double> xs{x};
      const double want = exact.continuation(l, x);
      EXPECT_LT(std::abs(est(l, xs) - want) / want, 0.02) << "l " << l << " x " << x;
      ++probes;
    }
  EXPECT_EQ(probes, 10);
}

TEST(Continuation, KnnWithAllNeighboursIgnoresTheQuery) {
  const PutSetup s(6, 200, 3);
  const auto est = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 200);
  for (std::size_t l = 1; l < 6; ++l) {
    const auto cont = s.mesh.continuation_at(l);
    const double mean = std::accumulate(cont.begin(), cont.end(), 0.0) / 200.0;
    for (double x : {60.0, 100.0, 150.0}) {
      const std::vector<double> xs{x};
      EXPECT_NEAR(est(l, xs), mean, 1e-12 * mean);
    }
  }
}

TEST(Continuation, SingleNeighbourAtTrainingPointEqualsDirect) {
  const PutSetup s(6, 250, 4);
  const auto knn = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 1);
  const auto direct = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  for (std::size_t l = 1; l < 6; ++l)
    for (std::size_t i = 0; i < 250; i += 11) EXPECT_EQ(knn(l, s.paths.at(i, l)), direct(l, s.paths.at(i, l)));
}

TEST(Continuation, KnnInvariantUnderPathPermutation) {
  const PutSetup s(5, 150, 5);
  std::vector<std::size_t> perm(150);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  PathSet shuffled(150, 5, s.x0, s.h, SeedRecord{5, 0});
  for (std::size_t l = 1; l <= 5; ++l)
    for (std::size_t n = 0; n < 150; ++n) shuffled.at(n, l)[0] = s.paths.at(perm[n], l)[0];
  const MeshValue m2 = backward_induction(shuffled, s.reward, s.model);
  const auto a = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 20);
  const auto b = ContinuationEstimator<GbmModel>::knn(shuffled, m2, s.model, 20);
  for (std::size_t l = 0; l < 5; ++l)
    for (double x : {75.0, 92.0, 100.0, 117.0}) {
      const std::vector<double> xs{x};
      EXPECT_NEAR(a(l, xs), b(l, xs), 1e-12 * (1.0 + a(l, xs)));
    }
}

TEST(Continuation, KnnRejectsBadK) {
  const PutSetup s(3, 20, 6);
  EXPECT_THROW(ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 21), ConfigError);
  EXPECT_THROW(ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 0), ConfigError);
}

TEST(Continuation, PureAndStepChecked) {
  const PutSetup s(4, 100, 7);
  const auto est = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 10);
  const std::vector<double> x{95.0};
  EXPECT_EQ(est(2, x), est(2, x));
  EXPECT_THROW(est(4, x), ConfigError);
}

TEST(LowerBound, ForcedImmediateStop) {
  const double h = 0.3;
  const GbmModel gbm(kRate, 0.0, {kSigma}, h);
  const std::vector<double> x0{90.0};
  const PathSet ps = simulate_paths(gbm, x0, 10, 100, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, zero_reward(), gbm);
  const auto est = ContinuationEstimator<GbmModel>::direct(ps, m, gbm);
  const auto lb = evaluate_lower_bound(est, put_reward(kStrike, kRate, h), gbm, 500, SeedRecord{2, 0});
  EXPECT_DOUBLE_EQ(lb.mean, 10.0);
  EXPECT_EQ(lb.std_error, 0.0);
  EXPECT_EQ(lb.histogram[0], 500u);
}

TEST(LowerBound, EuropeanPolicyMatchesBlackScholes) {
  const std::size_t steps = 50;
  const double h = kMaturity / steps;
  const GbmModel gbm(kRate, 0.0, {kSigma}, h);
  const std::vector<double> x0{100.0};
  auto never = [](std::size_t, std::span<const double>) { return kInf; };
  const auto lb = evaluate_policy(never, put_reward(kStrike, kRate, h), gbm, x0, steps, 20000, SeedRecord{9, 0});
  const double bs = black_scholes_put(100.0, kStrike, kRate, kSigma, 0.0, kMaturity);
  EXPECT_LT(std::abs(lb.mean - bs), 3.0 * lb.std_error);
  EXPECT_EQ(lb.histogram[steps], 20000u);
}

TEST(LowerBound, SameSeedIsContamination) {
  const PutSetup s(3, 50, 11);
  const auto est = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  EXPECT_THROW(evaluate_lower_bound(est, s.reward, s.model, 100, SeedRecord{11, 0}), ContaminationError);
  EXPECT_NO_THROW(evaluate_lower_bound(est, s.reward, s.model, 100, SeedRecord{11, 1}));
}

TEST(LowerBound, TerminalOnlyRewardStopsAtMaturity) {
  const std::size_t steps = 6;
  const double h = kMaturity / steps;
  const GbmModel gbm(kRate, 0.0, {kSigma}, h);
  const std::vector<double> x0{100.0};
  const RewardFunction reward = terminal_only(put_reward(kStrike, kRate, h), steps);
  const PathSet ps = simulate_paths(gbm, x0, steps, 400, SeedRecord{1, 0});
  const MeshValue m = backward_induction(ps, reward, gbm);
  const auto est = ContinuationEstimator<GbmModel>::direct(ps, m, gbm);
  const auto lb = evaluate_lower_bound(est, reward, gbm, 2000, SeedRecord{2, 0});
  EXPECT_EQ(lb.histogram[steps], 2000u);
  EXPECT_EQ(std::accumulate(lb.histogram.begin(), lb.histogram.end(), std::size_t{0}), 2000u);
}

TEST(LowerBound, StandardErrorAndHistogramInvariants) {
  const PutSetup s(10, 300, 12);
  const auto est = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 50);
  const auto lb = evaluate_lower_bound(est, s.reward, s.model, 3000, SeedRecord{13, 0});
  EXPECT_EQ(std::accumulate(lb.histogram.begin(), lb.histogram.end(), std::size_t{0}), 3000u);
  // recompute payoffs along the same streams
  std::vector<double> pay;
  for (std::size_t n = 0; n < 3000; ++n) {
    PathStream<GbmModel> p(s.model, s.x0, SeedRecord{13, 0}, n);
    for (std::size_t l = 0;; ++l) {
      const double g = s.reward(l, p.state());
      if (l == 10 || g >= est(l, p.state())) {
        pay.push_back(g);
        break;
      }
      p.advance();
    }
  }
  const double mean = std::accumulate(pay.begin(), pay.end(), 0.0) / 3000.0;
  double ss = 0.0;
  for (double v : pay) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(lb.mean, mean, 1e-12);
  EXPECT_NEAR(lb.std_error, std::sqrt(ss / 2999.0) / std::sqrt(3000.0), 1e-12);
}

TEST(LowerBound, DecisionsSeeOnlyCurrentStepAndState) {
  const std::size_t steps = 7;
  const double h = kMaturity / steps;
  const GbmModel gbm(kRate, 0.0, {kSigma}, h);
  const std::vector<double> x0{100.0};
  std::vector<std::vector<double>> seen(50);
  std::vector<std::vector<std::size_t>> steps_seen(50);
  // single-threaded so the recorder can key on the path via its state history
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  std::size_t path = 0;
  auto recorder = [&](std::size_t l, std::span<const double> x) {
    if (l == 0 && !steps_seen[path].empty()) ++path;
    steps_seen[path].push_back(l);
    seen[path].push_back(x[0]);
    return kInf;
  };
  evaluate_policy(recorder, put_reward(kStrike, kRate, h), gbm, x0, steps, 50, SeedRecord{3, 0});
  omp_set_num_threads(before);
  for (std::size_t n = 0; n < 50; ++n) {
    PathStream<GbmModel> p(gbm, x0, SeedRecord{3, 0}, n);
    ASSERT_EQ(steps_seen[n].size(), steps);
    for (std::size_t l = 0; l < steps; ++l) {
      EXPECT_EQ(steps_seen[n][l], l);
      EXPECT_EQ(seen[n][l], p.state()[0]);
      p.advance();
    }
  }
}

TEST(LowerBound, ThreadCountDoesNotChangeTheResult) {
  const PutSetup s(10, 200, 14);
  const auto est = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  const auto a = evaluate_lower_bound(est, s.reward, s.model, 1500, SeedRecord{15, 0});
  omp_set_num_threads(3);
  const auto b = evaluate_lower_bound(est, s.reward, s.model, 1500, SeedRecord{15, 0});
  omp_set_num_threads(before);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std_error, b.std_error);
  EXPECT_EQ(a.histogram, b.histogram);
}

TEST(LowerBound, BothVariantsStayBelowReference) {
  const PutSetup s(50, 2000, 1);
  const auto direct = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  const auto knn = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 500);
  const auto a = evaluate_lower_bound(direct, s.reward, s.model, 5000, SeedRecord{2, 0});
  const auto b = evaluate_lower_bound(knn, s.reward, s.model, 5000, SeedRecord{2, 0});
  EXPECT_LE(a.mean - 3.0 * a.std_error, kTruePrice);
  EXPECT_LE(b.mean - 3.0 * b.std_error, kTruePrice);
  // mesh value is biased high
  EXPECT_GE(s.mesh.u0(), a.mean - 3.0 * a.std_error);
}

TEST(LowerBound, KnnAgreesWithDirectOnBenchmark) {
  const PutSetup s(50, 2000, 1);
  const auto direct = ContinuationEstimator<GbmModel>::direct(s.paths, s.mesh, s.model);
  const auto knn = ContinuationEstimator<GbmModel>::knn(s.paths, s.mesh, s.model, 500);
  const auto a = evaluate_lower_bound(direct, s.reward, s.model, 20000, SeedRecord{2, 0});
  const auto b = evaluate_lower_bound(knn, s.reward, s.model, 20000, SeedRecord{2, 0});
  EXPECT_LT(std::abs(a.mean - b.mean), 2.0 * combined_std_error(a, b))
      << "direct " << a.mean << " +- " << a.std_error << ", knn " << b.mean << " +- " << b.std_error;
}
