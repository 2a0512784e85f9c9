#pragma once

namespace skintone::stats {

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Two-sided p-value P(|T| >= |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// Two-sided p-value under the standard normal.
double normal_two_sided_p(double z);

/// Standard normal quantile at 0.975.
inline constexpr double kZ975 = 1.959963984540054;

}  // namespace skintone::stats
