#include "crashrisk/market_model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/parallel.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk {

MarketModelFit fit_expanded_market_model(const std::vector<FirmWeekRecord>& firm_weeks,
                                         const MarketSeries& market) {
  std::vector<const FirmWeekRecord*> sorted;
  sorted.reserve(firm_weeks.size());
  for (const auto& r : firm_weeks) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->week < b->week; });

  MarketModelFit fit;
  if (!sorted.empty()) fit.firm_id = sorted.front()->firm_id;

  std::vector<std::array<double, 5>> lags;
  for (const auto* r : sorted) {
    const std::int64_t s = r->week.serial();
    std::array<double, 5> row{};
    bool complete = true;
    for (int k = -2; k <= 2 && complete; ++k) {
      auto it = market.find(IsoWeek::from_serial(s + k));
      if (it == market.end()) {
        complete = false;
      } else {
        row[static_cast<std::size_t>(k + 2)] = it->second;
      }
    }
    if (!complete) {
      ++fit.weeks_excluded;
      continue;
    }
    lags.push_back(row);
    fit.weeks.push_back(r->week);
    fit.returns.push_back(r->ret);
  }

  const std::size_t n = fit.weeks.size();
  if (n < kMinMarketModelWeeks) {
    throw InsufficientDataError("firm " + fit.firm_id + ": " + std::to_string(n) +
                                " usable weeks, market model needs " + std::to_string(kMinMarketModelWeeks));
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kMarketModelParams));
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    x(ii, 0) = 1.0;
    for (Eigen::Index k = 0; k < 5; ++k) x(ii, k + 1) = lags[i][static_cast<std::size_t>(k)];
    y(ii) = fit.returns[i];
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(kMarketModelParams)) {
    throw SingularDesignError("firm " + fit.firm_id + ": market model design is rank deficient (rank " +
                              std::to_string(qr.rank()) + " of 6)");
  }
  const Eigen::VectorXd coef = qr.solve(y);
  const Eigen::VectorXd resid = y - x * coef;

  fit.alpha = coef(0);
  for (std::size_t k = 0; k < 5; ++k) fit.betas[k] = coef(static_cast<Eigen::Index>(k + 1));
  fit.residuals.assign(resid.data(), resid.data() + resid.size());
  fit.n_obs = n;

  const double ybar = y.mean();
  const double tss = (y.array() - ybar).square().sum();
  const double rss = resid.squaredNorm();
  fit.r_squared = tss > 0.0 ? std::clamp(1.0 - rss / tss, 0.0, 1.0) : 1.0;
  return fit;
}

std::optional<double> firm_specific_return(double residual) {
  if (!(1.0 + residual > 0.0)) return std::nullopt;
  return std::log1p(residual);
}

FirmYearSlice make_slice(std::string firm_id, int year, std::vector<IsoWeek> weeks, std::vector<double> w) {
  FirmYearSlice s{std::move(firm_id), year, std::move(weeks), std::move(w), 0.0, 0.0};
  const double n = static_cast<double>(s.w.size());
  if (s.w.empty()) return s;
  double sum = 0.0;
  for (double v : s.w) sum += v;
  s.ret_mean = sum / n;
  if (s.w.size() > 1) {
    double ss = 0.0;
    for (double v : s.w) ss += (v - s.ret_mean) * (v - s.ret_mean);
    s.sigma = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

SliceBuild build_firm_year_slices(const std::vector<MarketModelFit>& fits, int min_weeks_per_year) {
  SliceBuild out;
  for (const auto& fit : fits) {
    std::map<int, std::pair<std::vector<IsoWeek>, std::vector<double>>> years;
    for (std::size_t i = 0; i < fit.residuals.size(); ++i) {
      auto w = firm_specific_return(fit.residuals[i]);
      if (!w) {
        out.diagnostics.push_back({fit.firm_id, fit.weeks[i].str(), "1 + residual <= 0; week dropped"});
        continue;
      }
      auto& bucket = years[fit.weeks[i].calendar_year()];
      bucket.first.push_back(fit.weeks[i]);
      bucket.second.push_back(*w);
    }
    for (auto& [year, bucket] : years) {
      if (bucket.second.size() < static_cast<std::size_t>(min_weeks_per_year)) {
        out.diagnostics.push_back({fit.firm_id, std::to_string(year),
                                   "firm-year below minimum weeks (" + std::to_string(bucket.second.size()) +
                                       ")"});
        continue;
      }
      out.slices.push_back(make_slice(fit.firm_id, year, std::move(bucket.first), std::move(bucket.second)));
    }
  }
  std::sort(out.slices.begin(), out.slices.end(), [](const FirmYearSlice& a, const FirmYearSlice& b) {
    return std::tie(a.firm_id, a.year) < std::tie(b.firm_id, b.year);
  });
  return out;
}

MarketModelBatch fit_all_firms(const std::vector<FirmWeekRecord>& records, const MarketSeries& market,
                               unsigned threads) {
  std::map<std::string, std::vector<FirmWeekRecord>> by_firm;
  for (const auto& r : records) by_firm[r.firm_id].push_back(r);
  std::vector<const std::vector<FirmWeekRecord>*> groups;
  std::vector<std::string> names;
  for (const auto& [firm, recs] : by_firm) {
    names.push_back(firm);
    groups.push_back(&recs);
  }

  std::vector<std::optional<MarketModelFit>> fits(groups.size());
  std::vector<std::string> errors(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t i) {
    try {
      fits[i] = fit_expanded_market_model(*groups[i], market);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });

  MarketModelBatch batch;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (fits[i]) {
      batch.fits.push_back(std::move(*fits[i]));
    } else {
      batch.failures.push_back({names[i], "", errors[i]});
    }
  }
  return batch;
}

std::string serialize_fits(const std::vector<MarketModelFit>& fits) {
  csv::Writer w({"firm_id", "alpha", "beta_m2", "beta_m1", "beta_0", "beta_p1", "beta_p2", "r_squared", "n_obs",
                 "weeks_excluded"});
  for (const auto& f : fits) {
    std::vector<std::string> row = {f.firm_id, csv::format_number(f.alpha)};
    for (double b : f.betas) row.push_back(csv::format_number(b));
    row.push_back(csv::format_number(f.r_squared));
    row.push_back(std::to_string(f.n_obs));
    row.push_back(std::to_string(f.weeks_excluded));
    w.row(std::move(row));
  }
  return w.str();
}

std::string serialize_weekly_returns(const std::vector<FirmYearSlice>& slices) {
  csv::Writer w({"firm_id", "year", "week", "w"});
  for (const auto& s : slices)
    for (std::size_t i = 0; i < s.w.size(); ++i)
      w.row({s.firm_id, std::to_string(s.year), s.weeks[i].str(), csv::format_number(s.w[i])});
  return w.str();
}

std::vector<FirmYearSlice> parse_weekly_returns(std::string_view text) {
  const csv::Table table = csv::parse(text);
  auto col = [&](const char* name) {
    auto c = table.column(name);
    if (!c) throw SchemaError(std::string("weekly returns: missing column ") + name);
    return *c;
  };
  const std::size_t cf = col("firm_id"), cy = col("year"), cw = col("week"), cv = col("w");
  std::map<FirmYear, std::pair<std::vector<IsoWeek>, std::vector<double>>> groups;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() < table.header.size()) throw DataError("weekly returns: short row " + std::to_string(r + 2));
    auto year = csv::parse_integer(row[cy]);
    auto v = csv::parse_number(row[cv]);
    if (!year || !v) throw DataError("weekly returns: bad value at line " + std::to_string(table.line_numbers[r]));
    auto& g = groups[{row[cf], static_cast<int>(*year)}];
    g.first.push_back(IsoWeek::parse(row[cw]));
    g.second.push_back(*v);
  }
  std::vector<FirmYearSlice> slices;
  for (auto& [key, g] : groups) slices.push_back(make_slice(key.firm_id, key.year, std::move(g.first), std::move(g.second)));
  return slices;
}

}  // namespace crashrisk
