#pragma once

namespace crashrisk::dist {

// Thin wrappers over Boost.Math; argument errors surface as std::domain_error.
double chi2_cdf(double x, double dof);
double chi2_quantile(double dof, double q);
double normal_cdf(double z);
// Two-sided p-value for a standard normal statistic.
double normal_two_sided_p(double z);
// Two-sided p-value for a Student-t statistic.
double student_t_two_sided_p(double t, double dof);

}  // namespace crashrisk::dist
