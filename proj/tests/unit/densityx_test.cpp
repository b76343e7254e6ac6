#include <gtest/gtest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "oracles/oracles.hpp"
#include "wsm/densityx/chain.hpp"
#include "wsm/densityx/diffusion.hpp"
#include "wsm/densityx/expansion.hpp"

using namespace wsm;

namespace {

Diffusion1d sine_sigma() {
  Diffusion1dSpec s;
  s.b = s.db = s.d2b = [](double) { return 0.0; };
  s.sigma = [](double x) { return 2.0 + std::sin(x); };
  s.dsigma = [](double x) { return std::cos(x); };
  s.d2sigma = [](double x) { return -std::sin(x); };
  s.d3sigma = [](double x) { return -std::cos(x); };
  s.sigma_lower = 1.0;
  s.sigma_upper = 3.0;
  s.rho_bound = 1.0;
  return Diffusion1d(std::move(s));
}

Diffusion1d constant_drift(double beta) {
  return Diffusion1d::constant_sigma([beta](double) { return beta; }, [](double) { return 0.0; },
                                     [](double) { return 0.0; }, 1.0, 0.5 * beta * beta);
}

// Expected bridge integral for OU (theta, unit noise) under the same trapezoid
// rule in z the estimator uses. E[rhobar(m + sqrt(step) B_z)] is exact since
// rhobar is quadratic and Var B_z = z (1 - z).
double ou_mean_integral(double theta, double ux, double uy, double step, std::size_t grid) {
  auto node = [&](double z) {
    const double m = ux + z * (uy - ux);
    return 0.5 * (theta * theta * (m * m + step * z * (1.0 - z)) - theta);
  };
  const double dz = 1.0 / static_cast<double>(grid - 1);
  double s = 0.5 * (node(0.0) + node(1.0));
  for (std::size_t i = 1; i + 1 < grid; ++i) s += node(static_cast<double>(i) * dz);
  return s * dz;
}

}  // namespace

TEST(Lamperti, UnitAndConstantSigma) {
  const auto bm = Diffusion1d::brownian();
  const auto c = Diffusion1d::constant_sigma([](double) { return 0.0; }, [](double) { return 0.0; }, nullptr, 0.4, 0.0);
  for (double x : {-3.0, -0.2, 0.0, 1.7}) {
    EXPECT_DOUBLE_EQ(bm.lamperti(x), x);
    EXPECT_NEAR(c.lamperti(x), x / 0.4, 1e-15);
  }
}

TEST(Lamperti, VariableSigmaMatchesTrapezoid) {
  const auto d = sine_sigma();
  for (double x : {-2.5, -1.0, 0.3, 2.0}) {
    const double ref = oracle::trapezoid([](double y) { return 1.0 / (2.0 + std::sin(y)); }, 0.0, x, 1000000);
    EXPECT_NEAR(d.lamperti(x), ref, 1e-7) << x;
  }
}

TEST(Lamperti, InverseRoundTripsAndIsIncreasing) {
  const auto d = sine_sigma();
  double prev = -kInf;
  for (double x = -3.0; x <= 3.0; x += 0.25) {
    const double u = d.lamperti(x);
    EXPECT_GT(u, prev);
    prev = u;
    EXPECT_NEAR(d.lamperti_inverse(u), x, 1e-8);
  }
}

TEST(BarFunctions, BrownianIsZero) {
  const auto bm = Diffusion1d::brownian();
  for (double u : {-1.0, 0.0, 2.0}) {
    const auto v = bm.bar(u);
    EXPECT_EQ(v.bbar, 0.0);
    EXPECT_EQ(v.rhobar, 0.0);
  }
}

TEST(BarFunctions, OrnsteinUhlenbeck) {
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  for (double u : {-1.5, 0.0, 0.4, 2.0}) {
    const auto v = ou.bar(u);
    EXPECT_NEAR(v.bbar, -u, 1e-15);
    EXPECT_NEAR(v.rhobar, 0.5 * (u * u - 1.0), 1e-15);
  }
}

TEST(BarFunctions, VariableSigmaAgainstFiniteDifferences) {
  const auto d = sine_sigma();
  for (double x : {-2.0, -0.7, 0.0, 1.1, 2.4}) {
    const auto v = d.bar_at(x);
    EXPECT_NEAR(v.bbar, -0.5 * std::cos(x), 1e-14);
    const double u = d.lamperti(x), h = 1e-4;
    const double fd = (d.bar(u + h).bbar - d.bar(u - h).bbar) / (2.0 * h);
    EXPECT_NEAR(v.dbbar, fd, 1e-5) << x;
    EXPECT_NEAR(v.rhobar, 0.5 * (v.bbar * v.bbar + fd), 1e-5);
    EXPECT_NEAR(d.bar(u).bbar, v.bbar, 1e-8);
  }
}

TEST(BarFunctions, WrongDerivativeIsRejected) {
  Diffusion1dSpec s;
  s.b = [](double x) { return x; };
  s.db = [](double) { return 2.0; };
  s.sigma = [](double) { return 1.0; };
  s.dsigma = s.d2sigma = [](double) { return 0.0; };
  s.sigma_lower = s.sigma_upper = 1.0;
  EXPECT_THROW(Diffusion1d(std::move(s)), ConfigError);
}

TEST(Coefficients, ZeroRhoGivesUnitSeries) {
  const auto bm = Diffusion1d::brownian();
  EXPECT_EQ(estimate_ck(bm, 0.0, 0.3, 0.1, 0, 100, 1).value, 1.0);
  for (std::size_t k = 1; k <= 3; ++k) {
    const auto c = estimate_ck(bm, 0.0, 0.3, 0.1, k, 500, 1);
    EXPECT_EQ(c.value, 0.0);
    EXPECT_EQ(c.std_error, 0.0);
  }
}

TEST(Coefficients, ConstantRhoIsExact) {
  const double beta = 0.8, rho = 0.5 * beta * beta;
  const auto d = constant_drift(beta);
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto c = estimate_ck(d, -0.4, 0.9, 0.05, k, 300, 2);
    EXPECT_NEAR(c.value, std::pow(-rho, static_cast<double>(k)), 1e-13);
    EXPECT_EQ(c.std_error, 0.0);
  }
}

TEST(Coefficients, OrnsteinUhlenbeckFirstCoefficient) {
  const double theta = 1.0, step = 0.05;
  const auto ou = Diffusion1d::ornstein_uhlenbeck(theta, 2.0);
  for (auto [x, y] : {std::pair{0.0, 0.0}, std::pair{0.0, 0.1}, std::pair{0.5, 0.3}, std::pair{-0.8, -0.6}}) {
    const auto c = estimate_ck(ou, x, y, step, 1, 100000, 3);
    const double expected = -ou_mean_integral(theta, x, y, step, 64);
    EXPECT_LT(std::abs(c.value - expected), 3.0 * c.std_error) << x << " " << y;
  }
}

TEST(Coefficients, RejectsBadInput) {
  const auto bm = Diffusion1d::brownian();
  EXPECT_THROW(estimate_ck(bm, 0.0, 0.0, 0.1, 1, 0, 1), ConfigError);
  EXPECT_THROW(estimate_ck(bm, 0.0, 0.0, 0.0, 1, 10, 1), ConfigError);
  EXPECT_THROW(estimate_ck(bm, 0.0, 0.0, 0.1, 1, 10, 1, 16), ConfigError);
}

TEST(Expansion, BrownianIsExactlyGaussian) {
  const auto bm = Diffusion1d::brownian();
  const ExpansionDensity exp(bm, {.order = 3, .step = 0.05, .bridges = 200, .grid = 64, .seed = 1});
  for (double y : {-0.6, -0.1, 0.0, 0.2, 0.7}) {
    const auto v = exp.evaluate(y, 0.05);
    EXPECT_NEAR(v.density, oracle::normal_pdf(y, 0.05, 0.05), 1e-12);
    EXPECT_EQ(v.std_error, 0.0);
  }
}

TEST(Expansion, ConstantDriftSeriesIsTheExponentialTaylorPolynomial) {
  const double beta = 1.2, step = 0.1, rho = 0.5 * beta * beta;
  const auto d = constant_drift(beta);
  const ExpansionDensity exp(d, {.order = 4, .step = step, .bridges = 100, .grid = 64, .seed = 1});
  const auto v = exp.evaluate(0.3, 0.0);
  double term = 1.0, sum = 1.0;
  for (std::size_t k = 1; k <= 4; ++k) {
    term *= -step * rho / static_cast<double>(k);
    sum += term;
    EXPECT_NEAR(v.partial[k], sum, 1e-14);
  }
  // exact density is N(x + beta step, step); the tail is below (step rho)^5 / 5! relative to the partial sum
  const double exact = oracle::normal_pdf(0.3, beta * step, step);
  EXPECT_NEAR(v.density / exact, 1.0, std::pow(step * rho, 5) / 120.0 * std::exp(step * rho));
}

TEST(Expansion, OrnsteinUhlenbeckWithinOnePercent) {
  const double theta = 1.0, step = 0.05;
  const auto ou = Diffusion1d::ornstein_uhlenbeck(theta, 2.0);
  const ExpansionDensity exp(ou, {.order = 3, .step = step, .bridges = 20000, .grid = 64, .seed = 4});
  for (auto [x, y] : {std::pair{0.0, 0.0}, std::pair{0.5, 0.45}, std::pair{-1.0, -0.8}, std::pair{0.2, 0.5}}) {
    const double exact = oracle::ou_density(y, x, theta, 1.0, step);
    EXPECT_LT(std::abs(exp.density(y, x) / exact - 1.0), 0.01) << x << " " << y;
  }
}

TEST(Expansion, NormalisesToOne) {
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  const ExpansionDensity exp(ou, {.order = 3, .step = 0.05, .bridges = 2000, .grid = 64, .seed = 5});
  const double x = 0.3, sd = std::sqrt(0.05);
  const double total = oracle::trapezoid([&](double y) { return exp.density(y, x); }, x - 10.0 * sd, x + 10.0 * sd, 250);
  EXPECT_GE(total, 0.99);
  EXPECT_LE(total, 1.01);
}

TEST(Expansion, StepLimit) {
  for (double d : {0.5, 2.0, 10.0}) {
    const double lim = expansion_step_limit(d);
    EXPECT_NEAR(lim * d * std::exp(lim * d), 0.5, 1e-14);
  }
  EXPECT_TRUE(std::isinf(expansion_step_limit(0.0)));
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  const double lim = expansion_step_limit(2.0);
  EXPECT_THROW(ExpansionDensity(ou, {.step = lim, .bridges = 10}), ExpansionRegimeError);
  EXPECT_THROW(ExpansionDensity(ou, {.step = 0.2, .bridges = 10}), ExpansionRegimeError);
  EXPECT_NO_THROW(ExpansionDensity(ou, {.step = 0.9 * lim, .bridges = 10}));
}

TEST(DecayCheck, ZeroRhoHasNoIncrements) {
  const auto bm = Diffusion1d::brownian();
  const ExpansionDensity exp(bm, {.order = 3, .step = 0.05, .bridges = 100, .grid = 64, .seed = 1});
  const std::vector<std::pair<double, double>> probes{{0.0, 0.1}, {0.5, -0.2}};
  const auto rep = ratio_decay_check(exp, 3, probes);
  for (double d : rep.delta) EXPECT_EQ(d, 0.0);
  EXPECT_TRUE(rep.passed());
}

TEST(DecayCheck, ConstantRhoMatchesScalarSeries) {
  const double beta = 1.0, step = 0.1, rho = 0.5;
  const auto d = constant_drift(beta);
  const ExpansionDensity exp(d, {.order = 3, .step = step, .bridges = 50, .grid = 64, .seed = 1});
  const std::vector<std::pair<double, double>> probes{{0.0, 0.1}};
  const auto rep = ratio_decay_check(exp, 3, probes);
  const double a = step * rho;
  double partial = 1.0, fact = 1.0;
  for (std::size_t n = 0; n < 3; ++n) {
    fact *= static_cast<double>(n + 1);
    const double next = std::pow(-a, static_cast<double>(n + 1)) / fact;
    partial += next;
    EXPECT_NEAR(rep.delta[n], std::abs(next) / std::abs(partial), 1e-14);
  }
  EXPECT_DOUBLE_EQ(rep.bound, a);
  EXPECT_TRUE(rep.passed());
}

TEST(DecayCheck, OrnsteinUhlenbeckDecaysGeometrically) {
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  const ExpansionDensity exp(ou, {.order = 3, .step = 0.05, .bridges = 20000, .grid = 64, .seed = 6});
  const std::vector<std::pair<double, double>> probes{{0.0, 0.1}, {0.5, 0.4}, {-0.5, -0.3}};
  const auto rep = ratio_decay_check(exp, 3, probes);
  ASSERT_EQ(rep.ratio.size(), 2u);
  EXPECT_TRUE(rep.passed());
  for (double r : rep.ratio) EXPECT_LE(r, 0.1);
}

TEST(Sampling, EmptyRequest) {
  const auto bm = Diffusion1d::brownian();
  const ExpansionDensity exp(bm, {.order = 3, .step = 0.05, .bridges = 10, .grid = 64, .seed = 1});
  EXPECT_TRUE(sample_pn(exp, 0.0, 0, 1).samples.empty());
}

TEST(Sampling, GaussianAcceptanceAndMoments) {
  const auto bm = Diffusion1d::brownian();
  const ExpansionDensity exp(bm, {.order = 3, .step = 0.05, .bridges = 10, .grid = 64, .seed = 1});
  const auto res = sample_pn(exp, 0.2, 20000, 7);
  EXPECT_GE(res.acceptance_rate, 0.6);
  std::vector<double> v = res.samples;
  const double ks = oracle::ks_statistic(v, [](double y) { return oracle::normal_cdf((y - 0.2) / std::sqrt(0.05)); });
  EXPECT_GT(oracle::ks_pvalue(ks, v.size()), 0.01);
}

TEST(Sampling, OrnsteinUhlenbeckMeanMatchesQuadrature) {
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  // few bridges: the sampler only has to reproduce whatever p^n the bank defines
  const ExpansionDensity exp(ou, {.order = 3, .step = 0.05, .bridges = 20, .grid = 64, .seed = 8});
  const double x = 0.8, sd = std::sqrt(0.05);
  const auto res = sample_pn(exp, x, 100000, 9);
  double m = 0.0, m2 = 0.0;
  for (double y : res.samples) {
    m += y;
    m2 += y * y;
  }
  const double n = static_cast<double>(res.samples.size());
  m /= n;
  const double se = std::sqrt((m2 / n - m * m) / n);
  const double a = x - 10.0 * sd, b = x + 10.0 * sd;
  const double mass = oracle::trapezoid([&](double y) { return exp.density(y, x); }, a, b, 400);
  const double first = oracle::trapezoid([&](double y) { return y * exp.density(y, x); }, a, b, 400);
  EXPECT_LT(std::abs(m - first / mass), 3.0 * se);
}

TEST(Chain, ExposesTheExpansionAsATransitionModel) {
  const auto ou = Diffusion1d::ornstein_uhlenbeck(1.0, 2.0);
  const ExpansionDensity exp(ou, {.order = 3, .step = 0.05, .bridges = 500, .grid = 64, .seed = 1});
  const ExpansionChain chain(exp);
  const std::vector<double> x{0.1}, y{0.2};
  EXPECT_DOUBLE_EQ(chain.step_size(), 0.05);
  EXPECT_NEAR(chain.log_density(y, x), std::log(exp.density(0.2, 0.1)), 1e-12);
}
