#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skintone/stats/design.hpp"

namespace skintone::stats {

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double statistic = 0.0;  // t for OLS, z (Wald) otherwise
  double p_value = 1.0;
};

struct ModelFit {
  std::vector<Coefficient> coefficients;  // intercept first
  std::vector<std::string> terms;         // model terms, in design order
  std::optional<double> r2;
  std::optional<double> adj_r2;
  std::optional<double> conditional_r2;
  double log_lik = 0.0;
  double bic = 0.0;
  std::size_t n = 0;
  std::size_t k = 0;  // estimated parameters incl. intercept and variance parameters
  double sigma2 = 0.0;
  std::vector<double> fitted;
  std::vector<double> deviance_history;  // IRLS only

  const Coefficient* find(std::string_view name) const;
  /// Throws std::out_of_range when the coefficient is not in the model.
  double estimate(std::string_view name) const;
};

/// Least squares with t inference on n - p degrees of freedom.
/// Throws RankDeficientError naming the collinear columns.
ModelFit ols_fit(const DesignSpec& spec);

struct LogisticOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;    // relative deviance change
  double separation_eta = 30;  // |linear predictor| treated as a divergence sign
};

/// Binary-response maximum likelihood via IRLS with step halving.
/// Throws SeparationError or ConvergenceError.
ModelFit logistic_fit(const DesignSpec& spec, const LogisticOptions& options = {});

double bic_of(const ModelFit& fit);
double bic_of(double log_lik, std::size_t n, std::size_t k);

/// beta_x / beta_lightness for every non-intercept coefficient, in model
/// order (the lightness entry itself is 1).
std::vector<std::pair<std::string, double>> l_star_ratios(const ModelFit& fit, std::string_view lightness_term);

using Fitter = std::function<ModelFit(const DesignSpec&)>;

struct StepwiseStep {
  enum class Action { start, drop, add };
  Action action = Action::start;
  std::string term;
  double bic = 0.0;
  std::vector<std::string> terms;  // model after the step
};

struct StepwiseResult {
  DesignSpec selected;
  ModelFit fit;
  std::vector<StepwiseStep> trace;
};

/// Bidirectional BIC search starting at the full model. Each step tries every
/// single-term drop and every re-add from the full term set and applies the
/// best move while it lowers BIC.
StepwiseResult stepwise_bic(const DesignSpec& full, const Fitter& fitter = ols_fit);

}  // namespace skintone::stats
