#include "crashrisk/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/rng.hpp"
#include "crashrisk/error.hpp"
#include "crashrisk/sentiment.hpp"

namespace crashrisk::simlab {

namespace chr = std::chrono;

void validate(const SimConfig& c) {
  if (c.n_firms < 1) throw ConfigError("sim.n_firms must be >= 1");
  if (c.n_years < 1) throw ConfigError("sim.n_years must be >= 1");
  if (c.weeks_per_year < 5) throw ConfigError("sim.weeks_per_year must be >= 5");
  if (!(c.crash_prob >= 0.0 && c.crash_prob <= 1.0)) throw ConfigError("sim.crash_prob must lie in [0, 1]");
  if (!(c.base_sigma > 0.0)) throw ConfigError("sim.base_sigma must be positive");
  if (!(c.crash_magnitude >= 0.0)) throw ConfigError("sim.crash_magnitude must be >= 0");
  if (c.n_industries < 1) throw ConfigError("sim.n_industries must be >= 1");
}

namespace {

std::string firm_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "F%05zu", i + 1);
  return buf;
}

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Generated week calendar: the first `weeks_per_year` Mondays of each year.
std::vector<std::vector<IsoWeek>> calendar(const SimConfig& c) {
  std::vector<std::vector<IsoWeek>> years;
  for (int y = c.start_year; y < c.start_year + c.n_years; ++y) {
    std::vector<IsoWeek> weeks;
    chr::sys_days day{chr::year{y} / chr::January / 1};
    while (chr::weekday{day}.iso_encoding() != 1) day += chr::days{1};
    while (static_cast<int>(chr::year_month_day{day}.year()) == y &&
           static_cast<int>(weeks.size()) < c.weeks_per_year) {
      weeks.push_back(IsoWeek::from_date(day));
      day += chr::days{7};
    }
    years.push_back(std::move(weeks));
  }
  return years;
}

}  // namespace

SimData generate(const SimConfig& c) {
  validate(c);
  const auto years = calendar(c);
  std::set<std::int64_t> serials;
  for (const auto& ws : years)
    for (const auto& w : ws) serials.insert(w.serial());
  auto eligible = [&](const IsoWeek& w) {
    const auto s = w.serial();
    for (int k = -2; k <= 2; ++k)
      if (!serials.count(s + k)) return false;
    return true;
  };

  Rng market_rng(derive_seed(c.seed, "__market__", 0));
  std::map<std::int64_t, double> market;
  for (auto s : serials) market[s] = market_rng.normal(0.002, 0.02);

  const auto& weights = sentiment::kPaperWeights;
  SimData data;
  for (std::size_t i = 0; i < c.n_firms; ++i) {
    const std::string firm = firm_name(i);
    Rng rng(derive_seed(c.seed, firm, 0));
    const double alpha = rng.normal(0.001, 0.001);
    const double beta = rng.normal(1.0, 0.3);
    const std::string industry = "IND" + std::to_string(1 + rng.below(static_cast<std::uint64_t>(c.n_industries)));
    const double size_level = rng.normal(6.0, 1.5);

    double prev_sent = 0.0;
    for (int yi = 0; yi < c.n_years; ++yi) {
      const int year = c.start_year + yi;
      // Sentiment inputs: standard-normal latent scores mapped to plausible units.
      std::array<double, sentiment::kInputs> z{};
      for (auto& v : z) v = rng.normal();
      double sent = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) sent += weights[k] * z[k];

      FundamentalsRow f;
      f.firm_id = firm;
      f.fiscal_year = year;
      f.size = size_level + rng.normal(0.0, 0.3);
      f.mtb = 2.0 + 0.8 * rng.normal();
      f.roa = 0.04 + 0.08 * rng.normal();
      f.dturn = 0.02 * rng.normal();
      f.accm = std::abs(0.06 * rng.normal());
      f.pe = 15.0 + 6.0 * z[0];
      f.turn = 0.12 + 0.04 * z[1];
      f.eqs = 0.3 + 0.1 * z[2];
      f.cefd = 0.05 + 0.02 * z[3];
      f.tobin = 1.5 + 0.5 * z[4];
      f.lev = 0.4 + 0.15 * z[5];
      f.bsi = 0.02 * z[6];
      f.industry = industry;
      data.fundamentals.push_back(f);

      double p = c.crash_prob;
      if (yi > 0 && c.sentiment_effect != 0.0 && p > 0.0 && p < 1.0)
        p = logistic(std::log(p / (1.0 - p)) + c.sentiment_effect * prev_sent);
      prev_sent = sent;

      const auto& weeks = years[static_cast<std::size_t>(yi)];
      std::optional<std::size_t> crash_week;
      if (rng.uniform() < p) {
        std::vector<std::size_t> candidates;
        for (std::size_t w = 0; w < weeks.size(); ++w)
          if (eligible(weeks[w])) candidates.push_back(w);
        if (!candidates.empty()) {
          crash_week = candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
          data.crashes.push_back({firm, year, weeks[*crash_week], c.crash_magnitude});
        }
      }
      for (std::size_t w = 0; w < weeks.size(); ++w) {
        double u = rng.normal(0.0, c.base_sigma);
        if (crash_week && *crash_week == w) u = -c.crash_magnitude * c.base_sigma;
        const double m = market[weeks[w].serial()];
        data.returns.push_back({firm, weeks[w], alpha + beta * m + u, m});
      }
    }
  }
  return data;
}

std::string serialize_ground_truth(const std::vector<InjectedCrash>& crashes) {
  csv::Writer w({"firm_id", "year", "injected_week", "magnitude"});
  for (const auto& c : crashes)
    w.row({c.firm_id, std::to_string(c.year), c.week.str(), csv::format_number(c.magnitude)});
  return w.str();
}

SimPaths gen_panel(const SimConfig& config, const std::filesystem::path& dir) {
  const SimData data = generate(config);
  SimPaths paths{dir / "returns.csv", dir / "fundamentals.csv", dir / "ground_truth.csv"};
  csv::write_atomic(paths.returns, serialize_returns(data.returns));
  csv::write_atomic(paths.fundamentals, serialize_fundamentals(data.fundamentals));
  csv::write_atomic(paths.ground_truth, serialize_ground_truth(data.crashes));
  return paths;
}

double determinant(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (a[piv][c] == 0.0) return 0.0;
    if (piv != c) {
      std::swap(a[piv], a[c]);
      det = -det;
    }
    det *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return det;
}

BruteForceMcd mcd_bruteforce(const std::vector<std::vector<double>>& data, std::uint64_t budget) {
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("mcd_bruteforce: empty data");
  const std::size_t p = data[0].size();
  if (n <= p) throw std::invalid_argument("mcd_bruteforce: needs n > p");
  const std::size_t h = (n + p + 1) / 2;

  // C(n, h) with early exit once the budget is passed.
  double combos = 1.0;
  for (std::size_t i = 1; i <= h; ++i) combos = combos * static_cast<double>(n - h + i) / static_cast<double>(i);
  if (combos > static_cast<double>(budget)) throw std::length_error("mcd_bruteforce: enumeration budget exceeded");

  // Singularity floor, matching the library's rule: det <= (1e-12 * s)^p with
  // s the average per-coordinate variance (divisor n).
  std::vector<double> mean_all(p, 0.0);
  for (const auto& row : data)
    for (std::size_t j = 0; j < p; ++j) mean_all[j] += row[j] / static_cast<double>(n);
  double s = 0.0;
  for (const auto& row : data)
    for (std::size_t j = 0; j < p; ++j) s += (row[j] - mean_all[j]) * (row[j] - mean_all[j]);
  s /= static_cast<double>(n * p);
  const double floor = std::pow(1e-12 * s, static_cast<double>(p));

  std::vector<std::size_t> idx(h);
  for (std::size_t i = 0; i < h; ++i) idx[i] = i;
  BruteForceMcd best;
  bool found = false;
  while (true) {
    std::vector<double> mu(p, 0.0);
    for (auto i : idx)
      for (std::size_t j = 0; j < p; ++j) mu[j] += data[i][j];
    for (auto& v : mu) v /= static_cast<double>(h);
    std::vector<std::vector<double>> cov(p, std::vector<double>(p, 0.0));
    for (auto i : idx)
      for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) cov[a][b] += (data[i][a] - mu[a]) * (data[i][b] - mu[b]);
    for (auto& row : cov)
      for (auto& v : row) v /= static_cast<double>(h);
    const double det = determinant(cov);
    if (det > floor && (!found || det < best.determinant * (1.0 - 1e-10))) {
      best.determinant = det;
      best.support = idx;
      found = true;
    }
    std::size_t k = h;
    while (k > 0 && idx[k - 1] == n - h + k - 1) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t j = k; j < h; ++j) idx[j] = idx[j - 1] + 1;
  }
  if (!found) throw std::domain_error("mcd_bruteforce: all subsets singular");
  return best;
}

namespace {

// P(a, x) by series; valid for x < a + 1.
double gamma_series(double a, double x) {
  double sum = 1.0 / a, term = sum, ap = a;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Q(a, x) by Lentz continued fraction; valid for x >= a + 1.
double gamma_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double chi2_cdf(double x, double dof) {
  if (!(dof > 0.0) || std::isnan(x)) throw std::domain_error("chi2_cdf: invalid arguments");
  if (x <= 0.0) return 0.0;
  const double a = dof / 2.0, hx = x / 2.0;
  return hx < a + 1.0 ? gamma_series(a, hx) : 1.0 - gamma_cf(a, hx);
}

double chi2_quantile(double dof, double q) {
  if (!(dof > 0.0) || !(q > 0.0 && q < 1.0)) throw std::domain_error("chi2_quantile: invalid arguments");
  double lo = 0.0, hi = std::max(1.0, dof);
  while (chi2_cdf(hi, dof) < q) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(mid, dof) < q) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-15 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

std::vector<econ::PanelRow> gen_dynamic_panel(const DynamicPanelConfig& c) {
  std::vector<econ::PanelRow> rows;
  for (std::size_t i = 0; i < c.n_firms; ++i) {
    const std::string firm = firm_name(i);
    Rng rng(derive_seed(c.seed, firm, 1));
    const double eta = rng.normal(0.0, c.firm_effect_sd);
    double y = 0.0;
    for (int t = -c.burn_in; t < c.n_periods; ++t) {
      const double x = rng.normal();
      y = c.rho * y + c.beta_x * x + eta + rng.normal(0.0, c.noise_sd);
      if (t < 0) continue;
      econ::PanelRow row;
      row.firm_id = firm;
      row.year = 2000 + t;
      row.industry = "A";
      row.values["y"] = y;
      row.values["x"] = x;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace crashrisk::simlab
