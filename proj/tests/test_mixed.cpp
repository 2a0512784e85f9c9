#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "skintone/errors.hpp"
#include "skintone/stats/mixed.hpp"
#include "skintone/stats/special.hpp"

namespace skintone::stats {
namespace {

struct Planted {
  DesignSpec spec;
  std::vector<std::string> group;
};

// y = 2 + 0.5 x1 - 1 x2 + 0.8 [f == "b"] + b_g + e
Planted random_intercept_data(std::uint64_t seed, int groups, int per_group, double sigma_b, double sigma_e) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  const std::size_t n = static_cast<std::size_t>(groups * per_group);
  auto df = std::make_shared<DataFrame>(n);
  std::vector<double> x1, x2, y;
  std::vector<std::string> f, grp;
  for (int k = 0; k < groups; ++k) {
    const double b = sigma_b * g(rng);
    for (int j = 0; j < per_group; ++j) {
      x1.push_back(3.0 * g(rng));
      x2.push_back(g(rng));
      f.push_back(j % 2 ? "b" : "a");
      grp.push_back("G" + std::to_string(k));
      y.push_back(2.0 + 0.5 * x1.back() - 1.0 * x2.back() + (j % 2 ? 0.8 : 0.0) + b + sigma_e * g(rng));
    }
  }
  df->add_numeric("x1", x1);
  df->add_numeric("x2", x2);
  df->add_categorical("f", f);
  df->add_categorical("subject", grp);
  df->add_numeric("y", y);
  return {{"y", {Term::continuous("x1", false), Term::continuous("x2", false), Term::categorical("f")}, df}, grp};
}

TEST(ProfileLikelihood, MatchesDenseCovarianceOracle) {
  const auto data = random_intercept_data(2, 5, 6, 1.0, 1.0);
  const auto dm = build_design(data.spec);
  const auto n = dm.X.rows();
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n, 5);
  for (Eigen::Index i = 0; i < n; ++i) Z(i, std::stoi(data.group[static_cast<std::size_t>(i)].substr(1))) = 1.0;
  for (double lambda : {0.0, 0.05, 0.7, 3.0, 40.0}) {
    const Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n) + lambda * Z * Z.transpose();
    const Eigen::MatrixXd Vi = V.inverse();
    const Eigen::VectorXd beta = (dm.X.transpose() * Vi * dm.X).ldlt().solve(dm.X.transpose() * Vi * dm.y);
    const Eigen::VectorXd r = dm.y - dm.X * beta;
    const double s2 = r.dot(Vi * r) / static_cast<double>(n);
    const double logdet = std::log(V.determinant());
    const double want =
        -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * s2) - 0.5 * logdet - 0.5 * static_cast<double>(n);
    EXPECT_NEAR(lmm_profile_log_lik(data.spec, "subject", lambda), want, 1e-9) << lambda;
  }
}

TEST(LmmFit, ExactlyZeroGroupVarianceMatchesOls) {
  // Residuals are projected off both the fixed design and the group
  // indicators, so every group's residual mean is zero and the likelihood
  // falls monotonically in lambda.
  auto data = random_intercept_data(4, 12, 20, 0.0, 1.0);
  const auto dm = build_design(data.spec);
  const auto n = dm.X.rows();
  Eigen::MatrixXd XZ(n, dm.X.cols() + 12);
  XZ.leftCols(dm.X.cols()) = dm.X;
  XZ.rightCols(12).setZero();
  for (Eigen::Index i = 0; i < n; ++i)
    XZ(i, dm.X.cols() + std::stoi(data.group[static_cast<std::size_t>(i)].substr(1))) = 1.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = g(rng);
  const Eigen::VectorXd proj = XZ * XZ.colPivHouseholderQr().solve(e);
  e -= proj;
  std::vector<double> y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = 1.0 + 0.3 * dm.X(i, 1) + e(i);
  auto df = std::make_shared<DataFrame>(*data.spec.data);
  df->add_numeric("y2", y);
  DesignSpec spec{"y2", data.spec.terms, df};

  const auto ols = ols_fit(spec);
  const auto mixed = lmm_fit(spec, "subject");
  EXPECT_TRUE(mixed.at_boundary);
  EXPECT_LT(mixed.sigma_b2, 1e-6);
  for (std::size_t j = 0; j < ols.coefficients.size(); ++j) {
    EXPECT_NEAR(mixed.fixed.coefficients[j].estimate, ols.coefficients[j].estimate, 1e-6);
  }
  EXPECT_EQ(mixed.fixed.k, ols.k + 1);  // one extra variance parameter
  EXPECT_NEAR(mixed.fixed.log_lik, ols.log_lik, 1e-6);
}

TEST(LmmFit, RecoversPlantedEffectsAndVariances) {
  double sum_b = 0.0, sum_e = 0.0;
  int misses = 0;
  const double planted[] = {2.0, 0.5, -1.0, 0.8};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto data = random_intercept_data(seed, 24, 250, 2.0, 1.0);
    const auto fit = lmm_fit(data.spec, "subject");
    EXPECT_EQ(fit.groups, 24u);
    EXPECT_FALSE(fit.at_boundary);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto& c = fit.fixed.coefficients[j];
      misses += std::abs(c.estimate - planted[j]) > 3.0 * c.std_error;
      EXPECT_NEAR(fit.ci95[j].low, c.estimate - kZ975 * c.std_error, 1e-12);
      EXPECT_NEAR(fit.ci95[j].high, c.estimate + kZ975 * c.std_error, 1e-12);
    }
    sum_b += fit.sigma_b2;
    sum_e += fit.sigma_e2;
    EXPECT_GE(fit.fixed.log_lik, lmm_profile_log_lik(data.spec, "subject", 0.0));
  }
  EXPECT_LE(misses, 1);  // 80 intervals at 3 SE
  EXPECT_NEAR(sum_b / 20.0, 4.0, 0.3 * 4.0);
  EXPECT_NEAR(sum_e / 20.0, 1.0, 0.3 * 1.0);
}

TEST(LmmFit, OptimumIsStationary) {
  const auto data = random_intercept_data(9, 10, 15, 1.0, 1.0);
  const auto fit = lmm_fit(data.spec, "subject");
  ASSERT_GT(fit.lambda, 0.0);
  const double at = lmm_profile_log_lik(data.spec, "subject", fit.lambda);
  EXPECT_NEAR(at, fit.fixed.log_lik, 1e-9);
  EXPECT_GE(at, lmm_profile_log_lik(data.spec, "subject", fit.lambda * 1.001));
  EXPECT_GE(at, lmm_profile_log_lik(data.spec, "subject", fit.lambda / 1.001));
  EXPECT_NEAR(fit.sigma_b2, fit.lambda * fit.sigma_e2, 1e-12);
}

TEST(LmmFit, ConditionalR2Definition) {
  const auto data = random_intercept_data(10, 12, 30, 1.5, 1.0);
  const auto fit = lmm_fit(data.spec, "subject");
  const auto dm = build_design(data.spec);
  Eigen::VectorXd beta(dm.X.cols());
  for (Eigen::Index j = 0; j < beta.size(); ++j) beta(j) = fit.fixed.coefficients[static_cast<std::size_t>(j)].estimate;
  const Eigen::VectorXd xb = dm.X * beta;
  const double v = (xb.array() - xb.mean()).square().sum() / static_cast<double>(xb.size() - 1);
  EXPECT_NEAR(*fit.fixed.conditional_r2, (v + fit.sigma_b2) / (v + fit.sigma_b2 + fit.sigma_e2), 1e-12);
  EXPECT_GT(*fit.fixed.conditional_r2, 0.0);
  EXPECT_LT(*fit.fixed.conditional_r2, 1.0);
}

TEST(LmmFit, SingleObservationPerGroupIsUnidentifiable) {
  const auto data = random_intercept_data(11, 40, 1, 1.0, 1.0);
  DesignSpec spec = data.spec.with_terms({});
  const auto fit = lmm_fit(spec, "subject");
  EXPECT_FALSE(fit.identifiable);
  EXPECT_TRUE(fit.at_boundary);
  ASSERT_FALSE(fit.diagnostics.empty());
  EXPECT_NE(fit.diagnostics[0].find("not identifiable"), std::string::npos);
}

TEST(LmmFit, Errors) {
  const auto data = random_intercept_data(12, 1, 30, 1.0, 1.0);
  EXPECT_THROW(lmm_fit(data.spec, "subject"), std::invalid_argument);
  EXPECT_THROW(lmm_fit(data.spec, "nope"), std::invalid_argument);

  const auto ok = random_intercept_data(13, 6, 10, 1.0, 1.0);
  auto df = std::make_shared<DataFrame>(*ok.spec.data);
  std::vector<double> dup = df->numeric("x1");
  for (double& v : dup) v *= 2.0;
  df->add_numeric("x1b", dup);
  DesignSpec spec = ok.spec;
  spec.data = df;
  spec.terms.push_back(Term::continuous("x1b", false));
  EXPECT_THROW(lmm_fit(spec, "subject"), RankDeficientError);

  MixedOptions tight;
  tight.max_iterations = 2;
  const auto strong = random_intercept_data(14, 10, 20, 2.0, 1.0);
  EXPECT_THROW(lmm_fit(strong.spec, "subject", tight), ConvergenceError);
}

}  // namespace
}  // namespace skintone::stats
