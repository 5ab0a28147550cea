#include <algorithm>
#include <cmath>
#include <set>

#include "crashrisk/common/rng.hpp"
#include "crashrisk/data_panel.hpp"
#include "crashrisk/error.hpp"
#include "doctest.h"

using namespace crashrisk;

namespace {

std::vector<FirmWeekRecord> firm_year_weeks(const std::string& firm, int year, int n, double ret = 0.01) {
  std::vector<FirmWeekRecord> out;
  for (int k = 1; k <= n; ++k) out.push_back({firm, IsoWeek{year, k}, ret, 0.001 * k});
  return out;
}

std::set<std::pair<std::string, std::string>> keys(const std::vector<FirmWeekRecord>& rs) {
  std::set<std::pair<std::string, std::string>> s;
  for (const auto& r : rs) s.insert({r.firm_id, r.week.str()});
  return s;
}

}  // namespace

TEST_CASE("iso week parsing and calendar") {
  const auto w = IsoWeek::parse("2015-W01");
  CHECK(w.year == 2015);
  CHECK(w.week == 1);
  CHECK(w.str() == "2015-W01");
  // 2015-W01 starts on Monday 2014-12-29.
  CHECK(w.calendar_year() == 2014);
  CHECK(IsoWeek::parse("2010-W10").calendar_year() == 2010);
  CHECK(iso_weeks_in_year(2015) == 53);
  CHECK(iso_weeks_in_year(2014) == 52);
  CHECK_THROWS_AS(IsoWeek::parse("2014-W53"), DataError);
  CHECK_THROWS_AS(IsoWeek::parse("2014-13"), DataError);
  CHECK_THROWS_AS(IsoWeek::parse("2014-W00"), DataError);

  const auto a = IsoWeek::parse("2015-W53");
  const auto b = IsoWeek::parse("2016-W01");
  CHECK(b.serial() == a.serial() + 1);
  CHECK(IsoWeek::from_serial(a.serial()) == a);
  CHECK(IsoWeek::from_date(a.monday()) == a);
}

TEST_CASE("load_returns: well-formed file") {
  const auto l = parse_returns(
      "firm_id,week,ret,market_ret\n"
      "A,2010-W01,0.01,0.002\n"
      "A,2010-W02,-0.02,0.001\n"
      "B,2010-W01,0.0,0.002\n");
  CHECK(l.records.size() == 3);
  CHECK(l.diagnostics.empty());
  CHECK(l.records[1].ret == -0.02);
}

TEST_CASE("load_returns: a non-numeric cell becomes a diagnostic naming row and column") {
  const auto l = parse_returns(
      "firm_id,week,ret,market_ret\n"
      "A,2010-W01,0.01,0.002\n"
      "A,2010-W02,oops,0.001\n"
      "B,2010-W01,0.0,0.002\n");
  CHECK(l.records.size() == 2);
  REQUIRE(l.diagnostics.size() == 1);
  CHECK(l.diagnostics[0].line == 3);
  CHECK(l.diagnostics[0].column == "ret");
}

TEST_CASE("load_returns: duplicate key is an error naming the key") {
  try {
    parse_returns(
        "firm_id,week,ret,market_ret\n"
        "A,2010-W01,0.01,0.002\n"
        "A,2010-W01,0.02,0.002\n");
    FAIL("expected DuplicateKeyError");
  } catch (const DuplicateKeyError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("A") != std::string::npos);
    CHECK(msg.find("2010-W01") != std::string::npos);
  }
}

TEST_CASE("load_returns: missing column and column mapping") {
  CHECK_THROWS_AS(parse_returns("firm_id,week,ret\nA,2010-W01,0.1\n"), SchemaError);
  ColumnMapping m;
  m.rename["ret"] = "RET";
  m.rename["market_ret"] = "vwretd";
  const auto l = parse_returns("firm_id,week,RET,vwretd\nA,2010-W01,0.1,0.2\n", m);
  REQUIRE(l.records.size() == 1);
  CHECK(l.records[0].market_ret == 0.2);
}

TEST_CASE("load_returns: empty market return is a diagnostic") {
  const auto l = parse_returns("firm_id,week,ret,market_ret\nA,2010-W01,0.1,\nA,2010-W02,0.1,0.0\n");
  CHECK(l.records.size() == 1);
  REQUIRE(l.diagnostics.size() == 1);
  CHECK(l.diagnostics[0].column == "market_ret");
}

TEST_CASE("load_returns: missing file") {
  CHECK_THROWS_AS(load_returns("/nonexistent/returns.csv"), DataError);
}

TEST_CASE("returns round-trip") {
  Rng rng(9);
  std::vector<FirmWeekRecord> rs;
  for (int f = 0; f < 5; ++f)
    for (int k = 1; k <= 30; ++k) rs.push_back({"F" + std::to_string(f), IsoWeek{2011, k}, rng.normal() * 0.03, rng.normal() * 0.02});
  const auto text = serialize_returns(rs);
  const auto back = parse_returns(text);
  REQUIRE(back.records.size() == rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) {
    CHECK(back.records[i].firm_id == rs[i].firm_id);
    CHECK(back.records[i].week == rs[i].week);
    CHECK(back.records[i].ret == rs[i].ret);
    CHECK(back.records[i].market_ret == rs[i].market_ret);
  }
  CHECK(serialize_returns(back.records) == text);
}

TEST_CASE("fundamentals parse, missing cells and round-trip") {
  const std::string text =
      "firm_id,fiscal_year,size,mtb,roa,dturn,accm,pe,turn,eqs,cefd,tobin,lev,bsi,industry\n"
      "A,2010,5.1,1.2,0.05,0.01,0.03,15,0.2,0.3,0.05,1.1,0.4,0.01,IND1\n"
      "A,2011,5.2,,0.04,0.02,0.02,14,0.2,0.3,0.05,1.1,0.4,0.01,IND1\n"
      "B,2010,4.0,1.0,0.01,0.0,-0.01,9,0.1,0.2,0.04,0.9,0.3,0.0,IND2\n";
  const auto l = parse_fundamentals(text);
  // The negative-accruals row is reported and kept out of the data.
  REQUIRE(l.records.size() == 2);
  CHECK(std::isnan(l.records[1].mtb));
  REQUIRE(l.diagnostics.size() == 1);
  CHECK(l.diagnostics[0].column == "accm");
  const auto again = parse_fundamentals(serialize_fundamentals(l.records));
  CHECK(serialize_fundamentals(again.records) == serialize_fundamentals(l.records));
  CHECK_THROWS_AS(parse_fundamentals(text + "A,2010,5,1,0,0,0,1,1,1,1,1,1,1,IND1\n"), DuplicateKeyError);
}

TEST_CASE("cleaning: firm with 5% non-zero returns is removed") {
  std::vector<FirmWeekRecord> rs = firm_year_weeks("LOW", 2010, 40, 0.0);
  for (int k = 0; k < 2; ++k) rs[static_cast<std::size_t>(k)].ret = 0.01;  // 2 of 40 = 5%
  auto ok = firm_year_weeks("OK", 2010, 40);
  rs.insert(rs.end(), ok.begin(), ok.end());
  const auto c = apply_cleaning_filters(rs);
  CHECK(c.report.firms_in == 2);
  CHECK(c.report.firms_dropped_nonzero_filter == 1);
  CHECK(c.report.firms_out == 1);
  CHECK(std::all_of(c.records.begin(), c.records.end(), [](const auto& r) { return r.firm_id == "OK"; }));
}

TEST_CASE("cleaning: firm-year with 4 weeks is removed") {
  auto rs = firm_year_weeks("A", 2010, 52);
  auto short_year = firm_year_weeks("A", 2011, 4);
  rs.insert(rs.end(), short_year.begin(), short_year.end());
  const auto c = apply_cleaning_filters(rs);
  CHECK(c.records.size() == 52);
  CHECK(c.report.firm_years_dropped_min_weeks == 1);
  CHECK(c.report.weeks_dropped_min_weeks == 4);
  CHECK(c.report.firms_out == 1);
}

TEST_CASE("cleaning: a fully active firm is retained unchanged") {
  auto rs = firm_year_weeks("A", 2010, 52);
  const auto c = apply_cleaning_filters(rs);
  CHECK(keys(c.records) == keys(rs));
  CHECK(c.report.firms_in == 1);
  CHECK(c.report.firms_out == 1);
}

TEST_CASE("cleaning: empty input gives empty output and zero report") {
  const auto c = apply_cleaning_filters({});
  CHECK(c.records.empty());
  CHECK(c.report.firms_in == 0);
  CHECK(c.report.firms_out == 0);
}

TEST_CASE("cleaning: invalid bounds are config errors") {
  CHECK_THROWS_AS(apply_cleaning_filters({}, {1.5, 5}), ConfigError);
  CHECK_THROWS_AS(apply_cleaning_filters({}, {0.1, 0}), ConfigError);
}

TEST_CASE("cleaning properties: idempotent, order independent, counts reconcile") {
  Rng rng(21);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<FirmWeekRecord> rs;
    const int firms = 10;
    for (int f = 0; f < firms; ++f) {
      const double zero_share = rng.uniform();
      for (int y = 2010; y < 2013; ++y) {
        const int n = static_cast<int>(rng.below(12));
        for (int k = 1; k <= n; ++k) {
          const double r = rng.uniform() < zero_share ? 0.0 : rng.normal() * 0.02;
          rs.push_back({"F" + std::to_string(f), IsoWeek{y, 2 * k}, r, 0.0});
        }
      }
    }
    const auto once = apply_cleaning_filters(rs, {0.3, 5});
    const auto twice = apply_cleaning_filters(once.records, {0.3, 5});
    CHECK(keys(once.records) == keys(twice.records));

    auto shuffled = rs;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    const auto perm = apply_cleaning_filters(shuffled, {0.3, 5});
    CHECK(keys(perm.records) == keys(once.records));

    const auto& r = once.report;
    CHECK(r.firms_out == r.firms_in - r.firms_dropped_nonzero_filter - r.firms_dropped_min_weeks);
  }
}

TEST_CASE("market series") {
  std::vector<FirmWeekRecord> rs = {{"A", {2010, 1}, 0.1, 0.01}, {"B", {2010, 1}, 0.2, 0.01}, {"A", {2010, 2}, 0.1, 0.02}};
  const auto m = build_market_series(rs);
  CHECK(m.size() == 2);
  CHECK(m.at(IsoWeek{2010, 2}) == 0.02);
  rs.push_back({"C", {2010, 2}, 0.1, 0.03});
  CHECK_THROWS_AS(build_market_series(rs), DataError);
}

TEST_CASE("align_panel joins on (firm, year) and counts one-sided keys") {
  auto rs = firm_year_weeks("A", 2010, 10);
  auto more = firm_year_weeks("A", 2011, 10);
  rs.insert(rs.end(), more.begin(), more.end());
  FundamentalsRow f;
  f.firm_id = "A";
  f.fiscal_year = 2010;
  FundamentalsRow g = f;
  g.fiscal_year = 2012;

  const auto p = align_panel(rs, {f, g});
  REQUIRE(p.entries.size() == 1);
  CHECK(p.entries[0].key.year == 2010);
  CHECK(p.entries[0].weeks.size() == 10);
  CHECK(p.dropped_returns_only == 1);
  CHECK(p.dropped_fundamentals_only == 1);

  const auto empty = align_panel(rs, {});
  CHECK(empty.entries.empty());
  CHECK(empty.dropped_returns_only == 2);
}
