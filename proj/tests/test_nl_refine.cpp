#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace anchormap;
using anchormap::testing::Rng;

namespace
{
AnchorParams truth_params(const Anchor& a) { return {a.position, a.gamma, a.beta}; }

double param_error(const AnchorParams& p, const Anchor& a)
{
  return std::max({(p.position - a.position).norm(), std::abs(p.gamma - a.gamma), std::abs(p.beta - a.beta)});
}

AnchorParams perturbed_start(Rng& rng, const Anchor& a)
{
  const double sg = anchormap::testing::uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
  const double sb = anchormap::testing::uniform(rng, 0, 1) < 0.5 ? -1.0 : 1.0;
  return {a.position + 0.5 * anchormap::testing::random_unit(rng), a.gamma + sg * 0.2, a.beta * (1.0 + sb * 0.03)};
}

std::vector<RangeMeasurement> noisy(std::vector<RangeMeasurement> s, Rng& rng, double sigma)
{
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& m : s)
    m.range += g(rng);
  return s;
}
}  // namespace

TEST(Residuals, ZeroAtTruth)
{
  Rng rng(1);
  const Anchor a = anchormap::testing::random_anchor(rng);
  const auto s = anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 20));
  const auto [r, J] = residuals_and_jacobian(truth_params(a), s);
  EXPECT_LE(r.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Residuals, JacobianMatchesFiniteDifferences)
{
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial)
  {
    const Anchor a = anchormap::testing::random_anchor(rng);
    const auto s = anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 10));
    const AnchorParams p = perturbed_start(rng, a);
    const auto [r0, J] = residuals_and_jacobian(p, s);
    const double h = 1e-6;
    for (int c = 0; c < 5; ++c)
    {
      Vec5 dp = Vec5::Zero();
      dp(c) = h;
      // residual r = z - h(x), so the prediction derivative is -(dr/dx)
      const auto rp = residuals_and_jacobian(AnchorParams::from_vector(p.vector() + dp), s).first;
      const auto rm = residuals_and_jacobian(AnchorParams::from_vector(p.vector() - dp), s).first;
      const Eigen::VectorXd fd = -(rp - rm) / (2 * h);
      EXPECT_LE((fd - J.col(c)).norm(), 1e-5 * std::max(1.0, J.col(c).norm())) << trial << " col " << c;
    }
  }
}

TEST(Residuals, SingleSampleScalarColumns)
{
  const Anchor a{1, Vec3(0, 0, 0), 1.0, 0.0};
  const std::vector<RangeMeasurement> s{{1, 7.0, 0.0, Vec3(2, 3, 6)}};
  const auto [r, J] = residuals_and_jacobian(truth_params(a), s);
  EXPECT_DOUBLE_EQ(J(0, 4), 7.0);
  EXPECT_DOUBLE_EQ(J(0, 3), 1.0);
}

TEST(Refine, ConvergesFromPerturbedStartsOnNoiselessData)
{
  Rng rng(5050);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial)
  {
    Anchor a = anchormap::testing::random_anchor(rng);
    a.beta = 1.03;
    const auto s = anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 40));
    AnchorParams start = perturbed_start(rng, a);
    start.beta = 1.0;
    const auto sol = refine(start, s);
    if (param_error(sol.params, a) <= 1e-6 && sol.iterations <= 50)
      ++ok;
  }
  EXPECT_GE(ok, 95);
}

TEST(Refine, TruthIsAFixedPoint)
{
  Rng rng(6);
  const Anchor a = anchormap::testing::random_anchor(rng);
  const auto s = anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 30));
  const auto sol = refine(truth_params(a), s);
  EXPECT_LE(sol.iterations, 2);
  ASSERT_FALSE(sol.trace.empty());
  EXPECT_LT(sol.trace.front().step_norm, 1e-9);
  EXPECT_TRUE(sol.converged);
}

TEST(Refine, AcceptedCostsNeverIncrease)
{
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial)
  {
    const Anchor a = anchormap::testing::random_anchor(rng);
    const auto s = noisy(anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 50)), rng, 0.3);
    AnchorParams start{a.position + anchormap::testing::random_vec(rng, -2, 2), 0.0, 1.0};
    const auto sol = refine(start, s);
    for (std::size_t i = 1; i < sol.accepted_costs.size(); ++i)
      EXPECT_LE(sol.accepted_costs[i], sol.accepted_costs[i - 1]) << trial;
  }
}

TEST(Refine, LambdaFollowsAcceptance)
{
  Rng rng(8);
  const Anchor a = anchormap::testing::random_anchor(rng);
  const auto s = noisy(anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 50)), rng, 0.3);
  const LmConfig cfg;
  const auto sol = refine({a.position + Vec3(3, -2, 2), 1.0, 1.0}, s, cfg);
  ASSERT_GE(sol.trace.size(), 2u);
  for (std::size_t i = 1; i < sol.trace.size(); ++i)
  {
    const double expected = sol.trace[i - 1].lambda * (sol.trace[i - 1].accepted ? cfg.lambda_down : cfg.lambda_up);
    EXPECT_NEAR(sol.trace[i].lambda / expected, 1.0, 1e-12) << i;
  }
}

TEST(Refine, NoiselessCovarianceVanishes)
{
  Rng rng(9);
  const Anchor a = anchormap::testing::random_anchor(rng);
  const auto s = anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 40));
  const auto sol = refine(perturbed_start(rng, a), s);
  EXPECT_LE(sol.covariance.diagonal().maxCoeff(), 1e-9);
}

TEST(Refine, CovarianceMatchesEmpiricalSpread)
{
  Rng rng(10);
  const Anchor a{1, Vec3(1, -1, 4), 1.02, 0.1};
  const auto tags = anchormap::testing::random_tags(rng, 100);
  const auto clean = anchormap::testing::exact_samples(a, tags);
  std::vector<Vec5> estimates;
  Mat5 mean_cov = Mat5::Zero();
  const int runs = 300;
  for (int k = 0; k < runs; ++k)
  {
    const auto sol = refine(truth_params(a), noisy(clean, rng, 0.1));
    estimates.push_back(sol.params.vector());
    mean_cov += sol.covariance / runs;
  }
  Vec5 mean = Vec5::Zero();
  for (const auto& e : estimates)
    mean += e / runs;
  Mat5 emp = Mat5::Zero();
  for (const auto& e : estimates)
    emp += (e - mean) * (e - mean).transpose() / (runs - 1);
  for (int i = 0; i < 5; ++i)
    EXPECT_NEAR(std::sqrt(emp(i, i) / mean_cov(i, i)), 1.0, 0.15) << i;
}

TEST(Refine, GammaGauge)
{
  Rng rng(11);
  const Anchor a = anchormap::testing::random_anchor(rng);
  const auto s = noisy(anchormap::testing::exact_samples(a, anchormap::testing::random_tags(rng, 50)), rng, 0.1);
  const double c = 0.75;
  auto shifted = s;
  for (auto& m : shifted)
    m.range += c;
  const AnchorParams start{a.position + Vec3(0.3, -0.2, 0.1), a.gamma, 1.0};
  AnchorParams start_shifted = start;
  start_shifted.gamma += c;
  const auto s1 = refine(start, s);
  const auto s2 = refine(start_shifted, shifted);
  EXPECT_NEAR(s2.params.gamma - s1.params.gamma, c, 1e-9);
  EXPECT_LE((s2.params.position - s1.params.position).norm(), 1e-9);
}

TEST(Refine, InsufficientSamples)
{
  const std::vector<RangeMeasurement> s(4, RangeMeasurement{1, 2.0, 0.0, Vec3(1, 0, 0)});
  try
  {
    refine({}, s);
    FAIL();
  }
  catch (const Error& e)
  {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientSamples);
  }
}

TEST(RefineAll, MatchesIndependentCallsAndIsolatesFailures)
{
  Rng rng(12);
  const Anchor a1 = anchormap::testing::random_anchor(rng, 1);
  const Anchor a2 = anchormap::testing::random_anchor(rng, 2);
  const auto s1 = noisy(anchormap::testing::exact_samples(a1, anchormap::testing::random_tags(rng, 30)), rng, 0.1);
  const auto s2 = noisy(anchormap::testing::exact_samples(a2, anchormap::testing::random_tags(rng, 30)), rng, 0.1);
  std::map<int, AnchorParams> init{{1, {a1.position + Vec3(0.2, 0, 0), 0, 1}},
                                   {2, {a2.position - Vec3(0, 0.2, 0), 0, 1}},
                                   {3, {Vec3(1, 1, 1), 0, 1}}};
  const auto out = refine_all(init, {{1, s1}, {2, s2}});
  ASSERT_EQ(out.size(), 3u);
  const auto r1 = refine(init[1], s1);
  const auto r2 = refine(init[2], s2);
  ASSERT_TRUE(out[0].solution && out[1].solution);
  EXPECT_EQ(out[0].solution->params.vector(), r1.params.vector());
  EXPECT_EQ(out[1].solution->params.vector(), r2.params.vector());
  ASSERT_TRUE(out[2].error.has_value());
  EXPECT_EQ(out[2].error->code(), ErrorCode::InsufficientSamples);
}
