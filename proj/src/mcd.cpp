#include "crashrisk/mcd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "crashrisk/common/rng.hpp"
#include "crashrisk/distributions.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk::mcd {

namespace {

constexpr double kTieTolerance = 1e-10;

struct SubsetFit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::LLT<Eigen::MatrixXd> llt;
  double det = 0.0;
  bool singular = true;
};

// Determinants at or below this are treated as singular; scaled to the data
// so the rule is invariant to units.
double singular_floor(const Eigen::MatrixXd& data) {
  const auto n = static_cast<double>(data.rows());
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const double scale = (data.rowwise() - mean).squaredNorm() / (n * static_cast<double>(data.cols()));
  return std::pow(1e-12 * scale, static_cast<double>(data.cols()));
}

SubsetFit fit_subset(const Eigen::MatrixXd& data, std::span<const std::size_t> subset, double floor) {
  const auto p = data.cols();
  const auto m = static_cast<double>(subset.size());
  SubsetFit f;
  f.mean = Eigen::VectorXd::Zero(p);
  for (std::size_t i : subset) f.mean += data.row(static_cast<Eigen::Index>(i)).transpose();
  f.mean /= m;
  f.cov = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t i : subset) {
    const Eigen::VectorXd d = data.row(static_cast<Eigen::Index>(i)).transpose() - f.mean;
    f.cov.noalias() += d * d.transpose();
  }
  f.cov /= m;
  f.llt.compute(f.cov);
  if (f.llt.info() != Eigen::Success) return f;
  const auto diag = f.llt.matrixLLT().diagonal();
  f.det = diag.array().square().prod();
  f.singular = !(f.det > floor);
  return f;
}

std::vector<double> distances_under(const Eigen::MatrixXd& data, const Eigen::VectorXd& mean,
                                    const Eigen::LLT<Eigen::MatrixXd>& llt) {
  Eigen::MatrixXd centered = (data.rowwise() - mean.transpose()).transpose();
  llt.matrixL().solveInPlace(centered);
  std::vector<double> d(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index i = 0; i < centered.cols(); ++i) d[static_cast<std::size_t>(i)] = centered.col(i).squaredNorm();
  return d;
}

// Indices of the h smallest distances, ties by index; returned ascending.
std::vector<std::size_t> smallest(const std::vector<double>& d, std::size_t h) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) { return d[a] < d[b] || (d[a] == d[b] && a < b); };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(h), idx.end(), less);
  idx.resize(h);
  std::sort(idx.begin(), idx.end());
  return idx;
}

bool better(double det, const std::vector<std::size_t>& support, double best_det,
            const std::vector<std::size_t>& best_support) {
  if (best_support.empty()) return true;
  if (det < best_det * (1.0 - kTieTolerance)) return true;
  if (det <= best_det * (1.0 + kTieTolerance)) return support < best_support;
  return false;
}

McdFit finalize(const Eigen::MatrixXd& data, std::vector<std::size_t> support, const McdConfig& config,
                double floor) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t p = static_cast<std::size_t>(data.cols());
  const SubsetFit f = fit_subset(data, support, floor);
  if (f.singular) throw DegenerateDataError("MCD support covariance is singular");

  McdFit fit;
  fit.n = n;
  fit.p = p;
  fit.h = support.size();
  fit.location = f.mean;
  fit.raw_scatter = f.cov;
  fit.raw_determinant = f.det;
  fit.consistency = config.consistency_correction ? consistency_factor(fit.h, n, p) : 1.0;
  fit.scatter = f.cov * fit.consistency;
  fit.support = std::move(support);

  Eigen::LLT<Eigen::MatrixXd> llt(fit.scatter);
  fit.distances = distances_under(data, fit.location, llt);
  fit.cutoff = dist::chi2_quantile(static_cast<double>(p), config.quantile);
  fit.flags = flags_from_distances(fit.distances, fit.cutoff);
  return fit;
}

void check_shape(const Eigen::MatrixXd& data) {
  if (data.cols() < 1) throw DimensionError("MCD needs at least one dimension");
  if (data.rows() <= data.cols()) throw DimensionError("MCD needs n > p");
  if (!data.allFinite()) throw DataError("MCD input contains non-finite values");
}

}  // namespace

void validate(const McdConfig& config) {
  if (!(config.quantile > 0.5 && config.quantile < 1.0)) throw ConfigError("mcd.quantile must lie in (0.5, 1)");
  if (config.n_starts < 1) throw ConfigError("mcd.n_starts must be >= 1");
  if (config.max_csteps < 1) throw ConfigError("mcd.max_csteps must be >= 1");
}

std::size_t half_sample_size(std::size_t n, std::size_t p) {
  if (n <= p) throw DimensionError("half sample needs n > p (n=" + std::to_string(n) + ", p=" + std::to_string(p) + ")");
  return (n + p + 1) / 2;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 acc = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    acc = acc * (n - k + i) / i;
    if (acc > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(acc);
}

double mahalanobis_sq(const Eigen::VectorXd& x, const Eigen::VectorXd& location, const Eigen::MatrixXd& scatter) {
  Eigen::LLT<Eigen::MatrixXd> llt(scatter);
  if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0))
    throw SingularityError("scatter matrix is not positive definite");
  Eigen::VectorXd d = x - location;
  llt.matrixL().solveInPlace(d);
  return d.squaredNorm();
}

std::vector<std::size_t> c_step(const Eigen::MatrixXd& data, std::span<const std::size_t> subset) {
  const SubsetFit f = fit_subset(data, subset, singular_floor(data));
  if (f.singular) throw SingularityError("c_step: subset covariance is singular");
  return smallest(distances_under(data, f.mean, f.llt), subset.size());
}

double subset_determinant(const Eigen::MatrixXd& data, std::span<const std::size_t> subset) {
  return fit_subset(data, subset, 0.0).det;
}

McdFit mcd_exact(const Eigen::MatrixXd& data, const McdConfig& config) {
  validate(config);
  check_shape(data);
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t p = static_cast<std::size_t>(data.cols());
  const std::size_t h = half_sample_size(n, p);
  if (binomial(n, h) > config.exhaustive_threshold)
    throw DimensionError("mcd_exact: C(" + std::to_string(n) + "," + std::to_string(h) + ") exceeds threshold");

  const double floor = singular_floor(data);
  std::vector<std::size_t> combo(h);
  std::iota(combo.begin(), combo.end(), std::size_t{0});
  std::vector<std::size_t> best;
  double best_det = std::numeric_limits<double>::infinity();
  std::size_t singular = 0;
  for (;;) {
    const SubsetFit f = fit_subset(data, combo, floor);
    if (f.singular) {
      ++singular;
    } else if (best.empty() || f.det < best_det * (1.0 - kTieTolerance)) {
      // Lexicographic enumeration: an equal determinant never displaces an earlier support.
      best_det = f.det;
      best = combo;
    }
    // Next combination in lexicographic order.
    std::size_t i = h;
    while (i > 0 && combo[i - 1] == n - h + i - 1) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < h; ++j) combo[j] = combo[j - 1] + 1;
  }
  if (best.empty()) throw DegenerateDataError("mcd_exact: every h-subset has a singular covariance");

  McdFit fit = finalize(data, std::move(best), config, floor);
  fit.exact = true;
  fit.singular_subsets = singular;
  return fit;
}

McdFit fast_mcd(const Eigen::MatrixXd& data, const McdConfig& config) {
  validate(config);
  check_shape(data);
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const std::size_t p = static_cast<std::size_t>(data.cols());
  if (n <= p + 1) throw DimensionError("fast_mcd needs n > p + 1");
  const std::size_t h = half_sample_size(n, p);
  if (binomial(n, h) <= config.exhaustive_threshold) return mcd_exact(data, config);

  const double floor = singular_floor(data);
  Rng rng(config.seed);
  std::vector<std::size_t> best;
  double best_det = std::numeric_limits<double>::infinity();
  bool best_converged = true;
  std::size_t singular = 0;
  std::size_t nonconverged = 0;

  for (int start = 0; start < config.n_starts; ++start) {
    // Elemental start, grown until its covariance is nonsingular.
    std::vector<std::size_t> elemental = rng.sample_without_replacement(n, p + 1);
    SubsetFit f = fit_subset(data, elemental, floor);
    while (f.singular && elemental.size() < n) {
      std::size_t extra;
      do {
        extra = static_cast<std::size_t>(rng.below(n));
      } while (std::find(elemental.begin(), elemental.end(), extra) != elemental.end());
      elemental.push_back(extra);
      f = fit_subset(data, elemental, floor);
    }
    if (f.singular) {
      ++singular;
      continue;
    }

    std::vector<std::size_t> subset = smallest(distances_under(data, f.mean, f.llt), h);
    bool converged = false;
    bool degenerate = false;
    for (int step = 0; step < config.max_csteps; ++step) {
      f = fit_subset(data, subset, floor);
      if (f.singular) {
        degenerate = true;
        break;
      }
      std::vector<std::size_t> next = smallest(distances_under(data, f.mean, f.llt), h);
      if (next == subset) {
        converged = true;
        break;
      }
      subset = std::move(next);
    }
    if (degenerate) {
      ++singular;
      continue;
    }
    if (!converged) {
      ++nonconverged;
      f = fit_subset(data, subset, floor);
      if (f.singular) {
        ++singular;
        continue;
      }
    }
    if (better(f.det, subset, best_det, best)) {
      best_det = f.det;
      best = std::move(subset);
      best_converged = converged;
    }
  }
  if (best.empty()) throw DegenerateDataError("fast_mcd: no start produced a nonsingular h-subset");

  McdFit fit = finalize(data, std::move(best), config, floor);
  fit.converged = best_converged;
  fit.singular_subsets = singular;
  fit.nonconverged_starts = nonconverged;
  return fit;
}

double consistency_factor(std::size_t h, std::size_t n, std::size_t p) {
  if (p < 1 || h <= p || h > n) throw DimensionError("consistency_factor needs p >= 1 and p < h <= n");
  const double alpha = static_cast<double>(h) / static_cast<double>(n);
  if (alpha >= 1.0) return 1.0;
  const double dof = static_cast<double>(p);
  const double q = dist::chi2_quantile(dof, alpha);
  return alpha / dist::chi2_cdf(q, dof + 2.0);
}

std::vector<bool> flags_from_distances(std::span<const double> distances, double cutoff) {
  std::vector<bool> flags(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) flags[i] = distances[i] > cutoff;
  return flags;
}

NegOutlier negoutlier(const FirmYearSlice& slice, const McdConfig& config) {
  const std::size_t n = slice.w.size();
  if (n < kMinNegOutlierWeeks)
    throw InsufficientDataError("NEGOUTLIER needs at least " + std::to_string(kMinNegOutlierWeeks) + " weeks, got " +
                                std::to_string(n));
  NegOutlier out;
  // Canonical ordering makes the result independent of week order.
  std::vector<double> values = slice.w;
  std::sort(values.begin(), values.end());
  if (values.front() == values.back()) {
    out.diagnostic = "no dispersion";
    return out;
  }
  Eigen::MatrixXd data(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) data(static_cast<Eigen::Index>(i), 0) = values[i];

  McdConfig local = config;
  local.seed = derive_seed(config.seed, slice.firm_id, slice.year);
  try {
    McdFit fit = fast_mcd(data, local);
    const double mu = fit.location(0);
    for (std::size_t i = 0; i < n; ++i) {
      if (fit.flags[i] && values[i] < mu) {
        out.value = 1;
        break;
      }
    }
    out.fit = std::move(fit);
  } catch (const DegenerateDataError& e) {
    out.diagnostic = std::string("degenerate slice: ") + e.what();
  }
  return out;
}

}  // namespace crashrisk::mcd
