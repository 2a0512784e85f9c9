#pragma once

#include <string>
#include <vector>

#include "skintone/stats/models.hpp"

namespace skintone::stats {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Random-intercept linear mixed model, maximum likelihood.
struct MixedFit {
  ModelFit fixed;                // coefficients carry Wald z statistics
  std::vector<Interval> ci95;    // Wald intervals, parallel to fixed.coefficients
  double sigma_b2 = 0.0;         // random-intercept variance
  double sigma_e2 = 0.0;         // residual variance
  double lambda = 0.0;           // sigma_b2 / sigma_e2
  std::size_t groups = 0;
  bool at_boundary = false;      // optimum at lambda = 0
  bool identifiable = true;      // false when every group has one observation
  std::vector<std::string> diagnostics;
};

struct MixedOptions {
  double log_lambda_min = -18.0;
  double log_lambda_max = 12.0;
  double grid_step = 0.5;
  double tolerance = 1e-10;  // on log lambda
  int max_iterations = 500;
};

/// Profiled log-likelihood at a fixed variance ratio; exposed for testing.
double lmm_profile_log_lik(const DesignSpec& spec, const std::string& group, double lambda);

/// Fits y = X beta + b_group + e by profiling beta and sigma_e2 out of the
/// likelihood and searching log(lambda) on a grid refined by golden section.
/// Throws ConvergenceError, RankDeficientError, or std::invalid_argument for
/// fewer than two groups.
MixedFit lmm_fit(const DesignSpec& spec, const std::string& group, const MixedOptions& options = {});

}  // namespace skintone::stats
