#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crashrisk {

// ISO-8601 week ("YYYY-Www").
struct IsoWeek {
  int year = 0;
  int week = 0;

  static IsoWeek parse(std::string_view text);  // throws DataError
  static IsoWeek from_date(std::chrono::sys_days day);
  std::string str() const;
  std::chrono::sys_days monday() const;
  // Calendar year of the week's Monday; this is the fiscal year a week belongs to.
  int calendar_year() const;
  // Consecutive weeks have consecutive serials.
  std::int64_t serial() const;
  static IsoWeek from_serial(std::int64_t serial);

  auto operator<=>(const IsoWeek&) const = default;
};

int iso_weeks_in_year(int year);

struct FirmYear {
  std::string firm_id;
  int year = 0;
  auto operator<=>(const FirmYear&) const = default;
};

struct FirmWeekRecord {
  std::string firm_id;
  IsoWeek week;
  double ret = 0.0;
  double market_ret = 0.0;
};

struct FundamentalsRow {
  std::string firm_id;
  int fiscal_year = 0;
  // Missing cells load as NaN and are dropped listwise at regression time.
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  double size = kMissing, mtb = kMissing, roa = kMissing, dturn = kMissing, accm = kMissing;
  double pe = kMissing, turn = kMissing, eqs = kMissing, cefd = kMissing, tobin = kMissing,
         lev = kMissing, bsi = kMissing;
  std::string industry;
};

inline constexpr std::string_view kFundamentalNumericColumns[] = {
    "size", "mtb", "roa", "dturn", "accm", "pe", "turn", "eqs", "cefd", "tobin", "lev", "bsi"};

double fundamental_value(const FundamentalsRow& row, std::string_view column);
double& fundamental_value(FundamentalsRow& row, std::string_view column);

// Maps logical column names onto the header names found in a file.
// Unmapped logical names are looked up verbatim.
struct ColumnMapping {
  std::map<std::string, std::string> rename;
  std::string resolve(const std::string& logical) const;
};

struct Diagnostic {
  std::size_t line = 0;  // 1-based source line (header is line 1)
  std::string column;
  std::string message;
};

template <typename T>
struct Loaded {
  std::vector<T> records;
  std::vector<Diagnostic> diagnostics;
};

Loaded<FirmWeekRecord> parse_returns(std::string_view text, const ColumnMapping& mapping = {});
Loaded<FirmWeekRecord> load_returns(const std::filesystem::path& path, const ColumnMapping& mapping = {});
Loaded<FundamentalsRow> parse_fundamentals(std::string_view text, const ColumnMapping& mapping = {});
Loaded<FundamentalsRow> load_fundamentals(const std::filesystem::path& path,
                                          const ColumnMapping& mapping = {});

std::string serialize_returns(const std::vector<FirmWeekRecord>& records);
std::string serialize_fundamentals(const std::vector<FundamentalsRow>& rows);
std::string serialize_diagnostics(const std::vector<Diagnostic>& diagnostics);

struct CleaningConfig {
  double min_nonzero_frac = 0.10;
  int min_weeks_per_year = 5;
};

struct CleaningReport {
  std::size_t firms_in = 0;
  std::size_t firms_dropped_nonzero_filter = 0;
  std::size_t firms_dropped_min_weeks = 0;
  std::size_t weeks_dropped_invalid = 0;
  std::size_t firm_years_dropped_min_weeks = 0;
  std::size_t weeks_dropped_min_weeks = 0;
  std::size_t weeks_dropped_nonzero_filter = 0;
  std::size_t firms_out = 0;
};

struct Cleaned {
  std::vector<FirmWeekRecord> records;  // sorted by (firm_id, week)
  CleaningReport report;
};

// Drops firm-years with fewer than min_weeks_per_year weeks, then firms whose
// share of non-zero returns is below min_nonzero_frac.
Cleaned apply_cleaning_filters(std::vector<FirmWeekRecord> records, const CleaningConfig& config = {});

std::string serialize_cleaning_report(const CleaningReport& report);

using MarketSeries = std::map<IsoWeek, double>;

// Collects the market return per week; conflicting values are a DataError.
MarketSeries build_market_series(const std::vector<FirmWeekRecord>& records);

struct PanelEntry {
  FirmYear key;
  std::vector<FirmWeekRecord> weeks;
  FundamentalsRow fundamentals;
};

struct AlignedPanel {
  std::vector<PanelEntry> entries;  // sorted by key
  std::size_t dropped_returns_only = 0;
  std::size_t dropped_fundamentals_only = 0;
};

AlignedPanel align_panel(const std::vector<FirmWeekRecord>& returns,
                         const std::vector<FundamentalsRow>& fundamentals);

}  // namespace crashrisk
