#include <cmath>

#include "crashrisk/common/rng.hpp"
#include "crashrisk/error.hpp"
#include "crashrisk/market_model.hpp"
#include "doctest.h"

using namespace crashrisk;

namespace {

struct Series {
  MarketSeries market;
  std::vector<FirmWeekRecord> firm;
};

// n consecutive weeks of market data starting at 2010-W01; the firm has
// returns for every week.
Series make_series(std::size_t n, Rng& rng, double alpha, std::array<double, 5> betas, double noise) {
  Series s;
  const auto start = IsoWeek{2010, 1}.serial();
  std::vector<double> m(n);
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = rng.normal(0.001, 0.02);
    s.market[IsoWeek::from_serial(start + static_cast<std::int64_t>(i))] = m[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    double r = alpha + noise * rng.normal();
    for (int k = -2; k <= 2; ++k) {
      const auto j = static_cast<std::int64_t>(i) + k;
      if (j >= 0 && j < static_cast<std::int64_t>(n)) r += betas[static_cast<std::size_t>(k + 2)] * m[static_cast<std::size_t>(j)];
    }
    s.firm.push_back({"F", IsoWeek::from_serial(start + static_cast<std::int64_t>(i)), r, m[i]});
  }
  return s;
}

// Normal equations X'X b = X'y solved by Gauss-Jordan elimination.
std::vector<double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t k = x[0].size();
  std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) a[r][c] += x[i][r] * x[i][c];
      a[r][k] += x[i][r] * y[i];
    }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const double f = a[r][c] / a[c][c];
      for (std::size_t j = c; j <= k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  std::vector<double> b(k);
  for (std::size_t r = 0; r < k; ++r) b[r] = a[r][k] / a[r][r];
  return b;
}

std::vector<std::vector<double>> design_of(const MarketModelFit& fit, const MarketSeries& market) {
  std::vector<std::vector<double>> x;
  for (const auto& w : fit.weeks) {
    std::vector<double> row = {1.0};
    for (int k = -2; k <= 2; ++k) row.push_back(market.at(IsoWeek::from_serial(w.serial() + k)));
    x.push_back(row);
  }
  return x;
}

}  // namespace

TEST_CASE("firm return equal to market return is fit exactly") {
  Rng rng(1);
  auto s = make_series(60, rng, 0.0, {0, 0, 1, 0, 0}, 0.0);
  const auto fit = fit_expanded_market_model(s.firm, s.market);
  CHECK(std::abs(fit.alpha) < 1e-9);
  CHECK(std::abs(fit.betas[2] - 1.0) < 1e-9);
  for (std::size_t k : {0u, 1u, 3u, 4u}) CHECK(std::abs(fit.betas[k]) < 1e-9);
  for (double e : fit.residuals) CHECK(std::abs(e) < 1e-9);
  CHECK(std::abs(fit.r_squared - 1.0) < 1e-9);
  // Edge weeks lack a full window.
  CHECK(fit.n_obs == 56);
  CHECK(fit.weeks_excluded == 4);
}

TEST_CASE("constant firm return is an intercept-only fit") {
  Rng rng(2);
  auto s = make_series(60, rng, 0.0, {0, 0, 0, 0, 0}, 0.0);
  for (auto& r : s.firm) r.ret = 0.01;
  const auto fit = fit_expanded_market_model(s.firm, s.market);
  CHECK(std::abs(fit.alpha - 0.01) < 1e-12);
  for (double b : fit.betas) CHECK(std::abs(b) < 1e-10);
  for (double e : fit.residuals) CHECK(std::abs(e) < 1e-12);
}

TEST_CASE("coefficients match a normal-equations oracle") {
  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    auto s = make_series(60, rng, 0.002, {0.1, 0.2, 1.1, -0.1, 0.05}, 0.03);
    const auto fit = fit_expanded_market_model(s.firm, s.market);
    const auto b = normal_equations(design_of(fit, s.market), fit.returns);
    CHECK(std::abs(fit.alpha - b[0]) < 1e-8);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(fit.betas[k] - b[k + 1]) < 1e-8);
  }
}

TEST_CASE("fit invariants: orthogonality, reconstruction, zero-mean residuals, R2 range") {
  Rng rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    auto s = make_series(80, rng, -0.001, {0.0, 0.3, 0.9, 0.0, 0.2}, 0.04);
    const auto fit = fit_expanded_market_model(s.firm, s.market);
    const auto x = design_of(fit, s.market);
    const double n = static_cast<double>(fit.n_obs);
    CHECK(fit.residuals.size() == fit.n_obs);
    for (std::size_t c = 0; c < 6; ++c) {
      double dot = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) dot += x[i][c] * fit.residuals[i];
      CHECK(std::abs(dot) < 1e-8 * n);
    }
    double mean = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double fitted = fit.alpha;
      for (std::size_t k = 0; k < 5; ++k) fitted += fit.betas[k] * x[i][k + 1];
      CHECK(std::abs(fitted + fit.residuals[i] - fit.returns[i]) < 1e-12);
      mean += fit.residuals[i] / n;
    }
    CHECK(std::abs(mean) < 1e-10);
    CHECK(fit.r_squared >= -1e-12);
    CHECK(fit.r_squared <= 1.0 + 1e-12);
  }
}

TEST_CASE("scaling the market by c scales betas by 1/c and leaves residuals") {
  Rng rng(5);
  auto s = make_series(70, rng, 0.001, {0.1, 0.0, 1.0, 0.2, 0.0}, 0.02);
  const auto base = fit_expanded_market_model(s.firm, s.market);
  for (double c : {-3.0, 0.5, 10.0}) {
    MarketSeries scaled;
    for (const auto& [w, v] : s.market) scaled[w] = c * v;
    const auto fit = fit_expanded_market_model(s.firm, scaled);
    for (std::size_t k = 0; k < 5; ++k) CHECK(std::abs(fit.betas[k] - base.betas[k] / c) < 1e-9);
    for (std::size_t i = 0; i < fit.residuals.size(); ++i)
      CHECK(std::abs(fit.residuals[i] - base.residuals[i]) < 1e-9);
  }
}

TEST_CASE("market model errors") {
  Rng rng(6);
  auto s = make_series(10, rng, 0.0, {0, 0, 1, 0, 0}, 0.01);
  CHECK_THROWS_AS(fit_expanded_market_model(s.firm, s.market), InsufficientDataError);

  auto c = make_series(40, rng, 0.0, {0, 0, 1, 0, 0}, 0.01);
  for (auto& [w, v] : c.market) v = 0.01;
  CHECK_THROWS_AS(fit_expanded_market_model(c.firm, c.market), SingularDesignError);
}

TEST_CASE("missing market week excludes the windows that need it") {
  Rng rng(7);
  auto s = make_series(40, rng, 0.0, {0, 0, 1, 0, 0}, 0.01);
  s.market.erase(IsoWeek::from_serial(IsoWeek{2010, 1}.serial() + 20));
  const auto fit = fit_expanded_market_model(s.firm, s.market);
  // Weeks 18..22 each need week 20; plus the 4 edge weeks.
  CHECK(fit.n_obs == 40 - 4 - 5);
}

TEST_CASE("firm-specific return") {
  CHECK(*firm_specific_return(0.0) == 0.0);
  CHECK(std::abs(*firm_specific_return(-0.05) - (-0.0512932944)) < 1e-9);
  CHECK_FALSE(firm_specific_return(-1.2).has_value());
  CHECK_FALSE(firm_specific_return(-1.0).has_value());
}

TEST_CASE("slices: mean and sample sd") {
  auto z = make_slice("A", 2010, std::vector<IsoWeek>(5), {0, 0, 0, 0, 0});
  CHECK(z.ret_mean == 0.0);
  CHECK(z.sigma == 0.0);
  auto s = make_slice("A", 2010, std::vector<IsoWeek>(3), {-0.02, 0.01, 0.01});
  CHECK(std::abs(s.ret_mean) < 1e-12);
  // Squared deviations sum to 0.0006; divisor 2.
  CHECK(std::abs(s.sigma - std::sqrt(0.0003)) < 1e-12);
}

TEST_CASE("slices partition a fit by calendar year and drop bad weeks") {
  MarketModelFit fit;
  fit.firm_id = "A";
  for (int k = 40; k <= 52; ++k) fit.weeks.push_back({2010, k});
  for (int k = 1; k <= 10; ++k) fit.weeks.push_back({2011, k});
  fit.residuals.assign(fit.weeks.size(), 0.01);
  fit.residuals[3] = -1.5;
  fit.n_obs = fit.weeks.size();
  const auto b = build_firm_year_slices({fit}, 5);
  REQUIRE(b.slices.size() == 2);
  CHECK(b.slices[0].year == 2010);
  CHECK(b.slices[0].w.size() == 12);
  CHECK(b.slices[1].year == 2011);
  CHECK(b.slices[1].w.size() == 10);
  REQUIRE(b.diagnostics.size() == 1);
  CHECK(b.diagnostics[0].week == "2010-W43");
  for (const auto& sl : b.slices) {
    double m = 0;
    for (double v : sl.w) m += v / static_cast<double>(sl.w.size());
    CHECK(std::abs(sl.ret_mean - m) < 1e-12);
  }
}

TEST_CASE("batch fits are independent of thread count and weekly returns round-trip") {
  Rng rng(8);
  std::vector<FirmWeekRecord> all;
  MarketSeries market;
  for (int f = 0; f < 12; ++f) {
    Rng local(100 + static_cast<std::uint64_t>(f));
    auto s = make_series(104, local, 0.0, {0, 0, 1, 0, 0}, 0.03);
    if (f == 0) market = s.market;
    for (auto& r : s.firm) {
      r.firm_id = "F" + std::to_string(f);
      r.market_ret = market.at(r.week);
      all.push_back(r);
    }
  }
  const auto a = fit_all_firms(all, market, 1);
  const auto b = fit_all_firms(all, market, 6);
  CHECK(serialize_fits(a.fits) == serialize_fits(b.fits));
  const auto slices = build_firm_year_slices(a.fits).slices;
  const auto text = serialize_weekly_returns(slices);
  const auto back = parse_weekly_returns(text);
  REQUIRE(back.size() == slices.size());
  CHECK(serialize_weekly_returns(back) == text);
  CHECK(back[3].sigma == doctest::Approx(slices[3].sigma).epsilon(1e-14));
}
