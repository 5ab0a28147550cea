#include "crashrisk/data_panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>
#include <unordered_map>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk {

namespace chr = std::chrono;

namespace {

chr::sys_days week_one_monday(int year) {
  const chr::sys_days jan4{chr::year{year} / chr::January / 4};
  const unsigned iso_dow = chr::weekday{jan4}.iso_encoding();  // Mon = 1
  return jan4 - chr::days{iso_dow - 1};
}

}  // namespace

int iso_weeks_in_year(int year) {
  return static_cast<int>((week_one_monday(year + 1) - week_one_monday(year)).count() / 7);
}

IsoWeek IsoWeek::parse(std::string_view text) {
  // YYYY-Www
  auto fail = [&] { return DataError("invalid ISO week '" + std::string(text) + "'"); };
  if (text.size() != 8 || text[4] != '-' || (text[5] != 'W' && text[5] != 'w')) throw fail();
  IsoWeek w;
  auto r1 = std::from_chars(text.data(), text.data() + 4, w.year);
  auto r2 = std::from_chars(text.data() + 6, text.data() + 8, w.week);
  if (r1.ec != std::errc() || r1.ptr != text.data() + 4 || r2.ec != std::errc() ||
      r2.ptr != text.data() + 8)
    throw fail();
  if (w.week < 1 || w.week > iso_weeks_in_year(w.year)) throw fail();
  return w;
}

IsoWeek IsoWeek::from_date(chr::sys_days day) {
  const unsigned iso_dow = chr::weekday{day}.iso_encoding();
  const chr::sys_days monday = day - chr::days{iso_dow - 1};
  const chr::sys_days thursday = monday + chr::days{3};
  const int iso_year = static_cast<int>(chr::year_month_day{thursday}.year());
  const int week = static_cast<int>((monday - week_one_monday(iso_year)).count() / 7) + 1;
  return IsoWeek{iso_year, week};
}

std::string IsoWeek::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-W%02d", year, week);
  return buf;
}

chr::sys_days IsoWeek::monday() const { return week_one_monday(year) + chr::days{7 * (week - 1)}; }

int IsoWeek::calendar_year() const { return static_cast<int>(chr::year_month_day{monday()}.year()); }

std::int64_t IsoWeek::serial() const {
  // 1970-01-05 was a Monday.
  const auto days = (monday() - chr::sys_days{chr::year{1970} / chr::January / 5}).count();
  return days / 7;
}

IsoWeek IsoWeek::from_serial(std::int64_t serial) {
  return from_date(chr::sys_days{chr::year{1970} / chr::January / 5} + chr::days{7 * serial});
}

double fundamental_value(const FundamentalsRow& row, std::string_view column) {
  return fundamental_value(const_cast<FundamentalsRow&>(row), column);
}

double& fundamental_value(FundamentalsRow& row, std::string_view column) {
  if (column == "size") return row.size;
  if (column == "mtb") return row.mtb;
  if (column == "roa") return row.roa;
  if (column == "dturn") return row.dturn;
  if (column == "accm") return row.accm;
  if (column == "pe") return row.pe;
  if (column == "turn") return row.turn;
  if (column == "eqs") return row.eqs;
  if (column == "cefd") return row.cefd;
  if (column == "tobin") return row.tobin;
  if (column == "lev") return row.lev;
  if (column == "bsi") return row.bsi;
  throw std::invalid_argument("unknown fundamentals column: " + std::string(column));
}

std::string ColumnMapping::resolve(const std::string& logical) const {
  auto it = rename.find(logical);
  return it == rename.end() ? logical : it->second;
}

namespace {

std::vector<std::size_t> require_columns(const csv::Table& table, const ColumnMapping& mapping,
                                         const std::vector<std::string>& logical) {
  std::vector<std::size_t> idx;
  std::string missing;
  for (const auto& name : logical) {
    const std::string actual = mapping.resolve(name);
    if (auto c = table.column(actual)) {
      idx.push_back(*c);
    } else {
      missing += (missing.empty() ? "" : ", ") + actual;
    }
  }
  if (!missing.empty()) throw SchemaError("missing required column(s): " + missing);
  return idx;
}

}  // namespace

Loaded<FirmWeekRecord> parse_returns(std::string_view text, const ColumnMapping& mapping) {
  const csv::Table table = csv::parse(text);
  const std::vector<std::string> logical = {"firm_id", "week", "ret", "market_ret"};
  const auto idx = require_columns(table, mapping, logical);

  Loaded<FirmWeekRecord> out;
  std::map<std::pair<std::string, IsoWeek>, std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    auto cell = [&](std::size_t k) -> std::string_view {
      return idx[k] < row.size() ? std::string_view(row[idx[k]]) : std::string_view{};
    };
    auto diag = [&](std::size_t k, std::string msg) {
      out.diagnostics.push_back({line, mapping.resolve(logical[k]), std::move(msg)});
    };

    FirmWeekRecord rec;
    rec.firm_id = std::string(cell(0));
    if (rec.firm_id.empty()) {
      diag(0, "empty firm_id");
      continue;
    }
    try {
      rec.week = IsoWeek::parse(cell(1));
    } catch (const DataError& e) {
      diag(1, e.what());
      continue;
    }
    auto ret = csv::parse_number(cell(2));
    if (!ret) {
      diag(2, "unparseable number '" + std::string(cell(2)) + "'");
      continue;
    }
    if (cell(3).find_first_not_of(' ') == std::string_view::npos) {
      diag(3, "missing market return");
      continue;
    }
    auto mret = csv::parse_number(cell(3));
    if (!mret) {
      diag(3, "unparseable number '" + std::string(cell(3)) + "'");
      continue;
    }
    rec.ret = *ret;
    rec.market_ret = *mret;

    auto [it, inserted] = seen.emplace(std::make_pair(rec.firm_id, rec.week), line);
    if (!inserted) {
      throw DuplicateKeyError("duplicate (firm_id, week) key (" + rec.firm_id + ", " + rec.week.str() +
                              ") at lines " + std::to_string(it->second) + " and " + std::to_string(line));
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

Loaded<FirmWeekRecord> load_returns(const std::filesystem::path& path, const ColumnMapping& mapping) {
  if (!std::filesystem::exists(path)) throw DataError("input file not found: " + path.string());
  return parse_returns(csv::read_text(path), mapping);
}

Loaded<FundamentalsRow> parse_fundamentals(std::string_view text, const ColumnMapping& mapping) {
  const csv::Table table = csv::parse(text);
  std::vector<std::string> logical = {"firm_id", "fiscal_year"};
  for (auto c : kFundamentalNumericColumns) logical.emplace_back(c);
  logical.emplace_back("industry");
  const auto idx = require_columns(table, mapping, logical);

  Loaded<FundamentalsRow> out;
  std::map<FirmYear, std::size_t> seen;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = table.line_numbers[r];
    auto cell = [&](std::size_t k) -> std::string_view {
      return idx[k] < row.size() ? std::string_view(row[idx[k]]) : std::string_view{};
    };
    FundamentalsRow f;
    f.firm_id = std::string(cell(0));
    if (f.firm_id.empty()) {
      out.diagnostics.push_back({line, mapping.resolve("firm_id"), "empty firm_id"});
      continue;
    }
    auto year = csv::parse_integer(cell(1));
    if (!year) {
      out.diagnostics.push_back(
          {line, mapping.resolve("fiscal_year"), "unparseable integer '" + std::string(cell(1)) + "'"});
      continue;
    }
    f.fiscal_year = static_cast<int>(*year);
    bool ok = true;
    for (std::size_t k = 0; k < std::size(kFundamentalNumericColumns); ++k) {
      const std::string_view raw = cell(2 + k);
      if (raw.find_first_not_of(' ') == std::string_view::npos) continue;  // missing stays NaN
      auto v = csv::parse_number(raw);
      if (!v) {
        out.diagnostics.push_back(
            {line, mapping.resolve(logical[2 + k]), "unparseable number '" + std::string(raw) + "'"});
        ok = false;
        break;
      }
      fundamental_value(f, kFundamentalNumericColumns[k]) = *v;
    }
    if (!ok) continue;
    if (f.accm < 0.0) {
      out.diagnostics.push_back({line, mapping.resolve("accm"), "negative absolute accruals"});
      continue;
    }
    f.industry = std::string(cell(2 + std::size(kFundamentalNumericColumns)));
    FirmYear key{f.firm_id, f.fiscal_year};
    auto [it, inserted] = seen.emplace(key, line);
    if (!inserted) {
      throw DuplicateKeyError("duplicate (firm_id, fiscal_year) key (" + f.firm_id + ", " +
                              std::to_string(f.fiscal_year) + ") at lines " + std::to_string(it->second) +
                              " and " + std::to_string(line));
    }
    out.records.push_back(std::move(f));
  }
  return out;
}

Loaded<FundamentalsRow> load_fundamentals(const std::filesystem::path& path, const ColumnMapping& mapping) {
  if (!std::filesystem::exists(path)) throw DataError("input file not found: " + path.string());
  return parse_fundamentals(csv::read_text(path), mapping);
}

std::string serialize_returns(const std::vector<FirmWeekRecord>& records) {
  csv::Writer w({"firm_id", "week", "ret", "market_ret"});
  for (const auto& r : records)
    w.row({r.firm_id, r.week.str(), csv::format_number(r.ret), csv::format_number(r.market_ret)});
  return w.str();
}

std::string serialize_fundamentals(const std::vector<FundamentalsRow>& rows) {
  std::vector<std::string> header = {"firm_id", "fiscal_year"};
  for (auto c : kFundamentalNumericColumns) header.emplace_back(c);
  header.emplace_back("industry");
  csv::Writer w(header);
  for (const auto& f : rows) {
    std::vector<std::string> fields = {f.firm_id, std::to_string(f.fiscal_year)};
    for (auto c : kFundamentalNumericColumns) fields.push_back(csv::format_number(fundamental_value(f, c)));
    fields.push_back(f.industry);
    w.row(std::move(fields));
  }
  return w.str();
}

std::string serialize_diagnostics(const std::vector<Diagnostic>& diagnostics) {
  csv::Writer w({"line", "column", "message"});
  for (const auto& d : diagnostics) w.row({std::to_string(d.line), d.column, d.message});
  return w.str();
}

Cleaned apply_cleaning_filters(std::vector<FirmWeekRecord> records, const CleaningConfig& config) {
  if (!(config.min_nonzero_frac >= 0.0 && config.min_nonzero_frac <= 1.0))
    throw ConfigError("min_nonzero_frac must lie in [0, 1]");
  if (config.min_weeks_per_year < 1) throw ConfigError("min_weeks_per_year must be >= 1");

  Cleaned out;
  std::sort(records.begin(), records.end(), [](const FirmWeekRecord& a, const FirmWeekRecord& b) {
    return std::tie(a.firm_id, a.week) < std::tie(b.firm_id, b.week);
  });

  std::vector<FirmWeekRecord> valid;
  valid.reserve(records.size());
  std::set<std::string> firms_in;
  for (auto& r : records) {
    firms_in.insert(r.firm_id);
    if (std::isfinite(r.ret) && std::isfinite(r.market_ret)) {
      valid.push_back(std::move(r));
    } else {
      ++out.report.weeks_dropped_invalid;
    }
  }
  out.report.firms_in = firms_in.size();

  // Firm-year minimum-weeks filter.
  std::map<FirmYear, std::size_t> year_counts;
  for (const auto& r : valid) ++year_counts[{r.firm_id, r.week.calendar_year()}];
  std::vector<FirmWeekRecord> kept_years;
  kept_years.reserve(valid.size());
  for (auto& r : valid) {
    if (year_counts[{r.firm_id, r.week.calendar_year()}] >= static_cast<std::size_t>(config.min_weeks_per_year)) {
      kept_years.push_back(std::move(r));
    } else {
      ++out.report.weeks_dropped_min_weeks;
    }
  }
  for (const auto& [key, n] : year_counts)
    if (n < static_cast<std::size_t>(config.min_weeks_per_year)) ++out.report.firm_years_dropped_min_weeks;

  std::set<std::string> firms_after_years;
  for (const auto& r : kept_years) firms_after_years.insert(r.firm_id);
  out.report.firms_dropped_min_weeks = firms_in.size() - firms_after_years.size();

  // Whole-sample non-zero return share.
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> nonzero;  // (nonzero, total)
  for (const auto& r : kept_years) {
    auto& c = nonzero[r.firm_id];
    c.second += 1;
    if (r.ret != 0.0) c.first += 1;
  }
  std::set<std::string> dropped_firms;
  for (const auto& [firm, c] : nonzero) {
    const double frac = static_cast<double>(c.first) / static_cast<double>(c.second);
    if (frac < config.min_nonzero_frac) dropped_firms.insert(firm);
  }
  out.report.firms_dropped_nonzero_filter = dropped_firms.size();
  for (auto& r : kept_years) {
    if (dropped_firms.count(r.firm_id)) {
      ++out.report.weeks_dropped_nonzero_filter;
    } else {
      out.records.push_back(std::move(r));
    }
  }
  out.report.firms_out = firms_after_years.size() - dropped_firms.size();
  return out;
}

std::string serialize_cleaning_report(const CleaningReport& r) {
  csv::Writer w({"metric", "value"});
  auto row = [&](const char* name, std::size_t v) { w.row({name, std::to_string(v)}); };
  row("firms_in", r.firms_in);
  row("firms_dropped_nonzero_filter", r.firms_dropped_nonzero_filter);
  row("firms_dropped_min_weeks", r.firms_dropped_min_weeks);
  row("weeks_dropped_invalid", r.weeks_dropped_invalid);
  row("firm_years_dropped_min_weeks", r.firm_years_dropped_min_weeks);
  row("weeks_dropped_min_weeks", r.weeks_dropped_min_weeks);
  row("weeks_dropped_nonzero_filter", r.weeks_dropped_nonzero_filter);
  row("firms_out", r.firms_out);
  return w.str();
}

MarketSeries build_market_series(const std::vector<FirmWeekRecord>& records) {
  MarketSeries series;
  for (const auto& r : records) {
    auto [it, inserted] = series.emplace(r.week, r.market_ret);
    if (!inserted && std::abs(it->second - r.market_ret) > 1e-12) {
      throw DataError("inconsistent market return for week " + r.week.str() + " (firm " + r.firm_id + ")");
    }
  }
  return series;
}

AlignedPanel align_panel(const std::vector<FirmWeekRecord>& returns,
                         const std::vector<FundamentalsRow>& fundamentals) {
  std::map<FirmYear, std::vector<FirmWeekRecord>> by_key;
  for (const auto& r : returns) by_key[{r.firm_id, r.week.calendar_year()}].push_back(r);
  std::map<FirmYear, const FundamentalsRow*> fund;
  for (const auto& f : fundamentals) fund[{f.firm_id, f.fiscal_year}] = &f;

  AlignedPanel panel;
  for (auto& [key, weeks] : by_key) {
    auto it = fund.find(key);
    if (it == fund.end()) {
      ++panel.dropped_returns_only;
      continue;
    }
    std::sort(weeks.begin(), weeks.end(),
              [](const FirmWeekRecord& a, const FirmWeekRecord& b) { return a.week < b.week; });
    panel.entries.push_back({key, std::move(weeks), *it->second});
  }
  for (const auto& [key, row] : fund)
    if (!by_key.count(key)) ++panel.dropped_fundamentals_only;
  return panel;
}

}  // namespace crashrisk
