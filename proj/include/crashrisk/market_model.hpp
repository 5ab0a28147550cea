#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "crashrisk/data_panel.hpp"

namespace crashrisk {

// OLS fit of r_{j,t} on an intercept and market returns at t-2 .. t+2.
struct MarketModelFit {
  std::string firm_id;
  double alpha = 0.0;
  std::array<double, 5> betas{};  // lags t-2, t-1, t, t+1, t+2
  std::vector<IsoWeek> weeks;     // weeks used, ascending
  std::vector<double> returns;    // r_{j,t} for those weeks
  std::vector<double> residuals;
  double r_squared = 0.0;
  std::size_t n_obs = 0;
  std::size_t weeks_excluded = 0;  // incomplete lead/lag window or missing market
};

inline constexpr std::size_t kMarketModelParams = 6;
inline constexpr std::size_t kMinMarketModelWeeks = kMarketModelParams + 2;

// firm_weeks: one firm's records. Throws InsufficientDataError / SingularDesignError.
MarketModelFit fit_expanded_market_model(const std::vector<FirmWeekRecord>& firm_weeks,
                                         const MarketSeries& market);

// W = ln(1 + residual); nullopt when 1 + residual <= 0.
std::optional<double> firm_specific_return(double residual);

struct FirmYearSlice {
  std::string firm_id;
  int year = 0;
  std::vector<IsoWeek> weeks;
  std::vector<double> w;
  double ret_mean = 0.0;
  double sigma = 0.0;  // sample stdev, n-1 divisor
};

// Builds a slice from raw W values, computing RET and SIGMA.
FirmYearSlice make_slice(std::string firm_id, int year, std::vector<IsoWeek> weeks, std::vector<double> w);

struct SliceDiagnostic {
  std::string firm_id;
  std::string week;
  std::string message;
};

struct SliceBuild {
  std::vector<FirmYearSlice> slices;  // sorted by (firm, year)
  std::vector<SliceDiagnostic> diagnostics;
};

SliceBuild build_firm_year_slices(const std::vector<MarketModelFit>& fits, int min_weeks_per_year = 5);

// Fits every firm in `records` (any order). Firms whose fit fails are
// reported in `failures` rather than aborting the batch.
struct MarketModelBatch {
  std::vector<MarketModelFit> fits;  // sorted by firm_id
  std::vector<SliceDiagnostic> failures;
};
MarketModelBatch fit_all_firms(const std::vector<FirmWeekRecord>& records, const MarketSeries& market,
                               unsigned threads = 1);

std::string serialize_fits(const std::vector<MarketModelFit>& fits);
std::string serialize_weekly_returns(const std::vector<FirmYearSlice>& slices);
// Reads the weekly-returns artifact back into slices.
std::vector<FirmYearSlice> parse_weekly_returns(std::string_view text);

}  // namespace crashrisk
