#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crashrisk/market_model.hpp"

namespace crashrisk::mcd {

struct McdConfig {
  int n_starts = 500;
  int max_csteps = 100;
  std::uint64_t exhaustive_threshold = 200'000;  // max C(n, h) enumerated exactly
  double quantile = 0.975;                       // chi2_p quantile used as the flag cutoff
  std::uint64_t seed = 0;
  bool consistency_correction = true;
};

// Throws ConfigError on out-of-range knobs.
void validate(const McdConfig& config);

// Minimum Covariance Determinant fit of an n x p data matrix.
// 
// `scatter` carries the consistency factor when enabled; `raw_determinant`
// is always the determinant of the uncorrected support covariance (divisor h).
struct McdFit {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t h = 0;
  Eigen::VectorXd location;
  Eigen::MatrixXd scatter;
  Eigen::MatrixXd raw_scatter;
  double raw_determinant = 0.0;
  double consistency = 1.0;
  std::vector<std::size_t> support;  // ascending
  std::vector<double> distances;     // squared robust distances
  double cutoff = 0.0;
  std::vector<bool> flags;

  // Search diagnostics.
  bool exact = false;
  bool converged = true;
  std::size_t singular_subsets = 0;
  std::size_t nonconverged_starts = 0;
};

std::size_t half_sample_size(std::size_t n, std::size_t p);

// Saturating binomial coefficient (returns UINT64_MAX on overflow).
std::uint64_t binomial(std::size_t n, std::size_t k);

// Squared Mahalanobis distance (x - mu)' S^{-1} (x - mu).
// Throws SingularityError unless `scatter` is positive definite.
double mahalanobis_sq(const Eigen::VectorXd& x, const Eigen::VectorXd& location, const Eigen::MatrixXd& scatter);

// One concentration step: fit mean/covariance on `subset`, return the h
// indices (ascending) with smallest distance under that fit, h = |subset|.
// Throws SingularityError if the subset covariance is singular.
std::vector<std::size_t> c_step(const Eigen::MatrixXd& data, std::span<const std::size_t> subset);

// Determinant of the divisor-h covariance of `subset`.
double subset_determinant(const Eigen::MatrixXd& data, std::span<const std::size_t> subset);

// Global minimizer over all h-subsets; ties (within 1e-10 relative) go to the
// lexicographically smallest support. Throws DimensionError if C(n,h) exceeds
// the threshold and DegenerateDataError if every subset is singular.
McdFit mcd_exact(const Eigen::MatrixXd& data, const McdConfig& config = {});

// FastMCD: delegates to mcd_exact when C(n,h) <= exhaustive_threshold,
// otherwise runs n_starts elemental starts refined by C-steps.
McdFit fast_mcd(const Eigen::MatrixXd& data, const McdConfig& config = {});

// alpha / F_{chi2_{p+2}}(chi2_{p,alpha}), alpha = h / n.
double consistency_factor(std::size_t h, std::size_t n, std::size_t p);

// Flags recomputed from stored distances and cutoff.
std::vector<bool> flags_from_distances(std::span<const double> distances, double cutoff);

struct NegOutlier {
  int value = 0;
  std::string diagnostic;   // non-empty when the slice was degenerate
  std::optional<McdFit> fit;
};

// Firm-year crash flag: 1 iff some week is MCD-flagged and lies strictly
// below the robust location. The RNG seed is derived from
// (config.seed, firm_id, year). Throws InsufficientDataError below
// max(5, p + 2) = 5 weeks.
NegOutlier negoutlier(const FirmYearSlice& slice, const McdConfig& config = {});

inline constexpr std::size_t kMinNegOutlierWeeks = 5;

}  // namespace crashrisk::mcd
