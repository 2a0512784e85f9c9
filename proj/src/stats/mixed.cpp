#include "skintone/stats/mixed.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "skintone/errors.hpp"
#include "skintone/stats/special.hpp"

namespace skintone::stats {

namespace {

// Sufficient statistics for profiling the random-intercept likelihood.
class Profile {
 public:
  Profile(const DesignSpec& spec, const std::string& group) : dm_(build_design(spec)) {
    const auto& labels = spec.data->categorical(group);
    std::map<std::string, int> index;
    group_of_.reserve(labels.size());
    for (const auto& l : labels) {
      const auto [it, inserted] = index.emplace(l, static_cast<int>(index.size()));
      group_of_.push_back(it->second);
    }
    const auto p = dm_.X.cols();
    const auto G = static_cast<Eigen::Index>(index.size());
    sizes_ = Eigen::VectorXd::Zero(G);
    sums_ = Eigen::MatrixXd::Zero(p, G);
    for (Eigen::Index i = 0; i < dm_.X.rows(); ++i) {
      const int g = group_of_[static_cast<std::size_t>(i)];
      sizes_(g) += 1.0;
      sums_.col(g) += dm_.X.row(i).transpose();
    }
    xtx_ = dm_.X.transpose() * dm_.X;
  }

  const DesignMatrix& design() const { return dm_; }
  Eigen::Index groups() const { return sizes_.size(); }
  const Eigen::VectorXd& sizes() const { return sizes_; }

  struct Eval {
    double log_lik;
    double sigma_e2;
    Eigen::VectorXd beta;
    Eigen::MatrixXd a_inverse;  // (X' V0^-1 X)^-1
    Eigen::VectorXd group_resid;
  };

  Eval evaluate(double lambda, bool want_cov = false) const {
    const auto n = dm_.X.rows();
    const Eigen::VectorXd w = (lambda / (1.0 + lambda * sizes_.array())).matrix();

    Eigen::VectorXd ysum = Eigen::VectorXd::Zero(groups());
    for (Eigen::Index i = 0; i < n; ++i) ysum(group_of_[static_cast<std::size_t>(i)]) += dm_.y(i);

    const Eigen::MatrixXd A = xtx_ - sums_ * w.asDiagonal() * sums_.transpose();
    const Eigen::VectorXd c = dm_.X.transpose() * dm_.y - sums_ * (w.array() * ysum.array()).matrix();
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eval e;
    e.beta = ldlt.solve(c);

    const Eigen::VectorXd r = dm_.y - dm_.X * e.beta;
    e.group_resid = Eigen::VectorXd::Zero(groups());
    for (Eigen::Index i = 0; i < n; ++i) e.group_resid(group_of_[static_cast<std::size_t>(i)]) += r(i);
    const double quad = r.squaredNorm() - (w.array() * e.group_resid.array().square()).sum();

    const double dn = static_cast<double>(n);
    e.sigma_e2 = quad / dn;
    const double log_det = (1.0 + lambda * sizes_.array()).log().sum();
    e.log_lik = -0.5 * dn * (std::log(2.0 * std::numbers::pi * e.sigma_e2) + 1.0) - 0.5 * log_det;
    if (want_cov) e.a_inverse = ldlt.solve(Eigen::MatrixXd::Identity(A.rows(), A.cols()));
    return e;
  }

  int group_of(Eigen::Index i) const { return group_of_[static_cast<std::size_t>(i)]; }

 private:
  DesignMatrix dm_;
  std::vector<int> group_of_;
  Eigen::VectorXd sizes_;
  Eigen::MatrixXd sums_;
  Eigen::MatrixXd xtx_;
};

double sample_variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace

double lmm_profile_log_lik(const DesignSpec& spec, const std::string& group, double lambda) {
  return Profile(spec, group).evaluate(lambda).log_lik;
}

MixedFit lmm_fit(const DesignSpec& spec, const std::string& group, const MixedOptions& options) {
  if (!spec.data || !spec.data->has_categorical(group))
    throw std::invalid_argument("grouping column '" + group + "' is missing");
  const Profile profile(spec, group);
  const auto& dm = profile.design();
  if (profile.groups() < 2) throw std::invalid_argument("a random intercept needs at least 2 groups");
  if (dm.X.rows() <= dm.X.cols()) {
    throw RankDeficientError(
        fmt::format("{} observations cannot support {} fixed effects", dm.X.rows(), dm.X.cols()), {});
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.X);
    qr.setThreshold(1e-10);
    if (qr.rank() < dm.X.cols()) {
      std::vector<std::string> cols;
      const auto& perm = qr.colsPermutation().indices();
      for (Eigen::Index i = qr.rank(); i < dm.X.cols(); ++i) cols.push_back(dm.columns[static_cast<std::size_t>(perm(i))]);
      throw RankDeficientError("fixed-effect design is rank deficient", std::move(cols));
    }
  }

  MixedFit out;
  out.groups = static_cast<std::size_t>(profile.groups());

  double lambda = 0.0;
  if ((profile.sizes().array() == 1.0).all()) {
    // With one observation per group the two variances enter only through
    // their sum, so the likelihood is flat in lambda.
    out.identifiable = false;
    out.at_boundary = true;
    out.diagnostics.push_back(
        "random intercept not identifiable: every group has a single observation; lambda fixed at 0");
  } else {
    const auto ll_at = [&](double theta) { return profile.evaluate(std::exp(theta)).log_lik; };

    double best_theta = options.log_lambda_min;
    double best_ll = ll_at(best_theta);
    for (double theta = options.log_lambda_min + options.grid_step; theta <= options.log_lambda_max + 1e-12;
         theta += options.grid_step) {
      const double ll = ll_at(theta);
      if (ll > best_ll) {
        best_ll = ll;
        best_theta = theta;
      }
    }

    const double ll_zero = profile.evaluate(0.0).log_lik;
    if (best_theta <= options.log_lambda_min + 1e-12 || ll_zero >= best_ll) {
      out.at_boundary = true;
      out.diagnostics.push_back("random-intercept variance estimated at the boundary (0)");
    } else {
      if (best_theta >= options.log_lambda_max - 1e-12) {
        out.diagnostics.push_back("variance ratio at the upper search limit; group effects dominate");
      }
      // Golden-section refinement of the bracketing grid cell.
      constexpr double kInvPhi = 0.6180339887498949;
      double lo = best_theta - options.grid_step;
      double hi = std::min(best_theta + options.grid_step, options.log_lambda_max);
      double x1 = hi - kInvPhi * (hi - lo);
      double x2 = lo + kInvPhi * (hi - lo);
      double f1 = ll_at(x1);
      double f2 = ll_at(x2);
      int iter = 0;
      while (hi - lo > options.tolerance) {
        if (++iter > options.max_iterations) {
          throw ConvergenceError(fmt::format(
              "variance-ratio search did not converge after {} iterations (bracket [{}, {}] in log lambda)",
              options.max_iterations, lo, hi));
        }
        if (f1 > f2) {
          hi = x2;
          x2 = x1;
          f2 = f1;
          x1 = hi - kInvPhi * (hi - lo);
          f1 = ll_at(x1);
        } else {
          lo = x1;
          x1 = x2;
          f1 = f2;
          x2 = lo + kInvPhi * (hi - lo);
          f2 = ll_at(x2);
        }
      }
      lambda = std::exp(0.5 * (lo + hi));
      if (profile.evaluate(lambda).log_lik < ll_zero) {
        lambda = 0.0;
        out.at_boundary = true;
        out.diagnostics.push_back("random-intercept variance estimated at the boundary (0)");
      }
    }
  }

  const auto e = profile.evaluate(lambda, true);
  out.lambda = lambda;
  out.sigma_e2 = e.sigma_e2;
  out.sigma_b2 = lambda * e.sigma_e2;

  ModelFit& fit = out.fixed;
  fit.terms = spec.term_names();
  fit.n = static_cast<std::size_t>(dm.X.rows());
  fit.k = static_cast<std::size_t>(dm.X.cols()) + 2;
  fit.sigma2 = e.sigma_e2;
  for (Eigen::Index j = 0; j < dm.X.cols(); ++j) {
    Coefficient c{dm.columns[static_cast<std::size_t>(j)], e.beta(j), std::sqrt(e.sigma_e2 * e.a_inverse(j, j))};
    c.statistic = c.std_error > 0.0 ? c.estimate / c.std_error : 0.0;
    c.p_value = c.std_error > 0.0 ? normal_two_sided_p(c.statistic) : (c.estimate == 0.0 ? 1.0 : 0.0);
    out.ci95.push_back({c.estimate - kZ975 * c.std_error, c.estimate + kZ975 * c.std_error});
    fit.coefficients.push_back(std::move(c));
  }
  fit.log_lik = e.log_lik;
  fit.bic = bic_of(fit);

  const Eigen::VectorXd fixed_part = dm.X * e.beta;
  const double var_fixed = sample_variance(fixed_part);
  fit.conditional_r2 = (var_fixed + out.sigma_b2) / (var_fixed + out.sigma_b2 + out.sigma_e2);

  // Conditional fitted values: fixed part plus the predicted group intercept.
  const Eigen::VectorXd shrink = (lambda / (1.0 + lambda * profile.sizes().array())).matrix();
  fit.fitted.resize(static_cast<std::size_t>(dm.X.rows()));
  for (Eigen::Index i = 0; i < dm.X.rows(); ++i) {
    const int g = profile.group_of(i);
    fit.fitted[static_cast<std::size_t>(i)] = fixed_part(i) + shrink(g) * e.group_resid(g);
  }
  return out;
}

}  // namespace skintone::stats
