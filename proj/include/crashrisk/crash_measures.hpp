#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crashrisk/market_model.hpp"
#include "crashrisk/mcd.hpp"

namespace crashrisk {

// Negative coefficient of skewness of demeaned weekly returns:
//   -[n (n-1)^{3/2} sum d^3] / [(n-1)(n-2) (sum d^2)^{3/2}]
// Throws InsufficientDataError for n < 3, UndefinedMeasureError for zero dispersion.
double ncskew(std::span<const double> w);

// Down-to-up volatility: ln[((n_u - 1) sum_down d^2) / ((n_d - 1) sum_up d^2)],
// with down/up strictly below/above the mean.
double duvol(std::span<const double> w);

struct UpDownCounts {
  std::size_t up = 0;
  std::size_t down = 0;
};
UpDownCounts count_up_down(std::span<const double> w);

// 1 iff some week lies strictly below mean - k * stdev (n-1 divisor).
// Zero dispersion returns 0; `diagnostic` (optional) receives the reason.
int crash_indicator(std::span<const double> w, double k = 3.2, std::string* diagnostic = nullptr);

struct CrashMeasures {
  std::string firm_id;
  int year = 0;
  std::optional<int> negoutlier;
  std::optional<int> crash;
  std::optional<double> ncskew;
  std::optional<double> duvol;
  std::size_t n_weeks = 0;
  std::size_t n_up = 0;
  std::size_t n_down = 0;
  // Reason codes for missing measures ("" when present).
  std::string negoutlier_reason, crash_reason, ncskew_reason, duvol_reason;
  // Slice statistics carried along for the regression panel.
  double ret = 0.0;
  double sigma = 0.0;
  // Univariate MCD summary behind NEGOUTLIER (NaN when not fitted).
  std::size_t mcd_h = 0;
  double mcd_location = std::numeric_limits<double>::quiet_NaN();
  double mcd_scatter = std::numeric_limits<double>::quiet_NaN();
  double mcd_raw_determinant = std::numeric_limits<double>::quiet_NaN();
  double mcd_cutoff = std::numeric_limits<double>::quiet_NaN();
};

struct MeasureConfig {
  mcd::McdConfig mcd;
  double crash_sigma = 3.2;
};

CrashMeasures compute_all(const FirmYearSlice& slice, const MeasureConfig& config = {});

std::vector<CrashMeasures> compute_all_slices(const std::vector<FirmYearSlice>& slices, const MeasureConfig& config,
                                              unsigned threads = 1);

// Measures table, one row per (firm, year), with t+1 lead columns taken from
// the same firm's next calendar year (blank when that year is absent).
std::string serialize_measures(const std::vector<CrashMeasures>& measures);
std::vector<CrashMeasures> parse_measures(std::string_view text);

}  // namespace crashrisk
