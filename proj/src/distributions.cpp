#include "crashrisk/distributions.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <stdexcept>

namespace crashrisk::dist {

namespace bm = boost::math;

double chi2_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::domain_error("chi2_cdf: dof must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return bm::cdf(bm::chi_squared_distribution<double>(dof), x);
}

double chi2_quantile(double dof, double q) {
  if (!(dof > 0.0)) throw std::domain_error("chi2_quantile: dof must be positive");
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("chi2_quantile: q must lie in (0, 1)");
  return bm::quantile(bm::chi_squared_distribution<double>(dof), q);
}

double normal_cdf(double z) { return bm::cdf(bm::normal_distribution<double>(), z); }

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return std::nan("");
  return 2.0 * bm::cdf(bm::complement(bm::normal_distribution<double>(), std::abs(z)));
}

double student_t_two_sided_p(double t, double dof) {
  if (std::isnan(t)) return std::nan("");
  if (std::isinf(dof)) return normal_two_sided_p(t);
  return 2.0 * bm::cdf(bm::complement(bm::students_t_distribution<double>(dof), std::abs(t)));
}

}  // namespace crashrisk::dist
