#include "skintone/stats/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "skintone/errors.hpp"
#include "skintone/stats/special.hpp"

namespace skintone::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Column-pivoted QR with a rank check that names the dropped columns.
Eigen::ColPivHouseholderQR<Eigen::MatrixXd> checked_qr(const DesignMatrix& dm) {
  const auto n = dm.X.rows();
  const auto p = dm.X.cols();
  if (n <= p) {
    throw RankDeficientError(fmt::format("{} observations cannot support {} parameters", n, p), {});
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.X);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::vector<std::string> cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index i = qr.rank(); i < p; ++i) cols.push_back(dm.columns[static_cast<std::size_t>(perm(i))]);
    std::string list;
    for (const auto& c : cols) list += (list.empty() ? "" : ", ") + c;
    throw RankDeficientError("design is rank deficient; collinear columns: " + list, std::move(cols));
  }
  return qr;
}

/// (X'X)^-1 from a full-rank pivoted QR.
Eigen::MatrixXd gram_inverse(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  const auto p = qr.cols();
  const Eigen::MatrixXd R = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
  return qr.colsPermutation() * inner * qr.colsPermutation().transpose();
}

void fill_statistic(Coefficient& c, bool student, double df) {
  if (c.std_error > 0.0) {
    c.statistic = c.estimate / c.std_error;
    c.p_value = student ? student_t_two_sided_p(c.statistic, df) : normal_two_sided_p(c.statistic);
  } else if (c.estimate == 0.0) {
    c.statistic = kNaN;
    c.p_value = 1.0;
  } else {
    c.statistic = std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
    c.p_value = 0.0;
  }
}

std::vector<std::string> term_list(const DesignSpec& spec) { return spec.term_names(); }

}  // namespace

const Coefficient* ModelFit::find(std::string_view name) const {
  for (const auto& c : coefficients)
    if (c.name == name) return &c;
  return nullptr;
}

double ModelFit::estimate(std::string_view name) const {
  const auto* c = find(name);
  if (!c) throw std::out_of_range(fmt::format("coefficient '{}' is not in the model", name));
  return c->estimate;
}

double bic_of(double log_lik, std::size_t n, std::size_t k) {
  return static_cast<double>(k) * std::log(static_cast<double>(n)) - 2.0 * log_lik;
}

double bic_of(const ModelFit& fit) { return bic_of(fit.log_lik, fit.n, fit.k); }

ModelFit ols_fit(const DesignSpec& spec) {
  const DesignMatrix dm = build_design(spec);
  const auto qr = checked_qr(dm);
  const auto n = dm.X.rows();
  const auto p = dm.X.cols();

  const Eigen::VectorXd beta = qr.solve(dm.y);
  const Eigen::VectorXd fitted = dm.X * beta;
  const double rss = (dm.y - fitted).squaredNorm();
  const double tss = (dm.y.array() - dm.y.mean()).square().sum();
  const double df = static_cast<double>(n - p);
  const Eigen::MatrixXd cov = gram_inverse(qr) * (rss / df);

  ModelFit fit;
  fit.terms = term_list(spec);
  fit.n = static_cast<std::size_t>(n);
  fit.k = static_cast<std::size_t>(p) + 1;  // + residual variance
  fit.sigma2 = rss / df;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c{dm.columns[static_cast<std::size_t>(j)], beta(j), std::sqrt(std::max(0.0, cov(j, j)))};
    fill_statistic(c, true, df);
    fit.coefficients.push_back(std::move(c));
  }
  const double r2 = tss > 0.0 ? 1.0 - rss / tss : (rss == 0.0 ? 1.0 : kNaN);
  fit.r2 = r2;
  fit.adj_r2 = 1.0 - (1.0 - r2) * static_cast<double>(n - 1) / df;
  const double dn = static_cast<double>(n);
  fit.log_lik = -0.5 * dn * (std::log(2.0 * std::numbers::pi) + std::log(rss / dn) + 1.0);
  fit.bic = bic_of(fit);
  fit.fitted.assign(fitted.data(), fitted.data() + n);
  return fit;
}

ModelFit logistic_fit(const DesignSpec& spec, const LogisticOptions& options) {
  const DesignMatrix dm = build_design(spec);
  checked_qr(dm);
  const auto n = dm.X.rows();
  const auto p = dm.X.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dm.y(i) != 0.0 && dm.y(i) != 1.0)
      throw std::invalid_argument(fmt::format("logistic response must be 0/1, row {} is {}", i, dm.y(i)));
  }

  constexpr double kClamp = 1e-15;
  const auto deviance_of = [&](const Eigen::VectorXd& eta) {
    double dev = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + exp(-|eta|)) form avoids overflow in either tail.
      const double e = eta(i);
      const double log1pexp = std::max(e, 0.0) + std::log1p(std::exp(-std::abs(e)));
      dev += 2.0 * (log1pexp - dm.y(i) * e);
    }
    return dev;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = dm.X * beta;
  double dev = deviance_of(eta);
  ModelFit fit;
  fit.deviance_history.push_back(dev);

  bool converged = false;
  Eigen::VectorXd w(n);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = std::clamp(1.0 / (1.0 + std::exp(-eta(i))), kClamp, 1.0 - kClamp);
      w(i) = mu * (1.0 - mu);
      z(i) = eta(i) + (dm.y(i) - mu) / w(i);
    }
    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd Xw = dm.X.array().colwise() * sw.array();
    const Eigen::VectorXd zw = z.array() * sw.array();
    Eigen::VectorXd proposal = Xw.colPivHouseholderQr().solve(zw);

    Eigen::VectorXd next_eta = dm.X * proposal;
    double next_dev = deviance_of(next_eta);
    for (int halving = 0; halving < 30 && !(next_dev <= dev); ++halving) {
      proposal = 0.5 * (proposal + beta);
      next_eta = dm.X * proposal;
      next_dev = deviance_of(next_eta);
    }
    if (!(next_dev <= dev)) {
      // No descent direction left; we are at the optimum to machine precision.
      converged = true;
      break;
    }
    const double change = std::abs(dev - next_dev) / (std::abs(next_dev) + 0.1);
    beta = proposal;
    eta = next_eta;
    dev = next_dev;
    fit.deviance_history.push_back(dev);
    if (change < options.tolerance) {
      converged = true;
      break;
    }
  }

  const double max_eta = eta.cwiseAbs().maxCoeff();
  if (max_eta > options.separation_eta) {
    throw SeparationError(fmt::format(
        "fitted probabilities reach 0 or 1 (|linear predictor| = {:.1f}); the response is separable", max_eta));
  }
  if (!converged) {
    throw ConvergenceError(fmt::format("IRLS did not converge in {} iterations (deviance {})",
                                       options.max_iterations, dev));
  }

  Eigen::VectorXd mu(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
    w(i) = std::max(mu(i) * (1.0 - mu(i)), kClamp);
  }
  const Eigen::MatrixXd Xw = dm.X.array().colwise() * w.array().sqrt();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  const Eigen::MatrixXd cov = gram_inverse(qr);

  fit.terms = term_list(spec);
  fit.n = static_cast<std::size_t>(n);
  fit.k = static_cast<std::size_t>(p);
  fit.sigma2 = 1.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    Coefficient c{dm.columns[static_cast<std::size_t>(j)], beta(j), std::sqrt(std::max(0.0, cov(j, j)))};
    fill_statistic(c, false, 0.0);
    fit.coefficients.push_back(std::move(c));
  }
  fit.log_lik = -0.5 * dev;
  fit.bic = bic_of(fit);
  fit.fitted.assign(mu.data(), mu.data() + n);
  return fit;
}

std::vector<std::pair<std::string, double>> l_star_ratios(const ModelFit& fit, std::string_view lightness_term) {
  const Coefficient* light = fit.find(lightness_term);
  if (!light) throw std::invalid_argument(fmt::format("lightness term '{}' is not in the model", lightness_term));
  if (light->estimate == 0.0) throw std::domain_error("lightness coefficient is exactly zero");

  std::vector<std::pair<std::string, double>> ratios;
  for (const auto& c : fit.coefficients) {
    if (c.name == kIntercept) continue;
    ratios.emplace_back(c.name, c.estimate / light->estimate);
  }
  return ratios;
}

StepwiseResult stepwise_bic(const DesignSpec& full, const Fitter& fitter) {
  StepwiseResult result{full, fitter(full), {}};
  result.trace.push_back({StepwiseStep::Action::start, {}, result.fit.bic, full.term_names()});

  // Membership flags over the full term list keep candidate models in full-model order.
  std::vector<bool> in_model(full.terms.size(), true);
  const auto spec_for = [&](const std::vector<bool>& mask) {
    std::vector<Term> terms;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) terms.push_back(full.terms[i]);
    return full.with_terms(std::move(terms));
  };

  constexpr double kMinImprovement = 1e-10;
  for (;;) {
    std::optional<std::size_t> best_term;
    std::optional<ModelFit> best_fit;
    for (std::size_t i = 0; i < full.terms.size(); ++i) {
      auto mask = in_model;
      mask[i] = !mask[i];
      ModelFit candidate;
      try {
        candidate = fitter(spec_for(mask));
      } catch (const RankDeficientError&) {
        continue;
      }
      if (!best_fit || candidate.bic < best_fit->bic) {
        best_term = i;
        best_fit = std::move(candidate);
      }
    }
    if (!best_fit || !(best_fit->bic < result.fit.bic - kMinImprovement)) break;

    const std::size_t i = *best_term;
    in_model[i] = !in_model[i];
    result.selected = spec_for(in_model);
    result.fit = std::move(*best_fit);
    result.trace.push_back({in_model[i] ? StepwiseStep::Action::add : StepwiseStep::Action::drop,
                            full.terms[i].name, result.fit.bic, result.selected.term_names()});
  }
  return result;
}

}  // namespace skintone::stats
