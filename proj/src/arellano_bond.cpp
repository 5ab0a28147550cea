#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "crashrisk/distributions.hpp"
#include "crashrisk/econometrics.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk::econ {

namespace {

struct FirmSeries {
  std::map<int, std::size_t> row_by_year;
};

struct Equation {
  std::size_t firm = 0;
  int year = 0;
  double dy = 0.0;
  Eigen::VectorXd dx;  // differenced regressors
};

}  // namespace

RegressionResult arellano_bond(std::span<const PanelRow> rows, const AbGmmSpec& spec,
                               const std::vector<bool>* include) {
  if (spec.dep_lags < 1) throw ConfigError("AB-GMM dep_lags must be >= 1");
  if (include && include->size() != rows.size()) throw std::invalid_argument("include mask size mismatch");
  const int lags = spec.dep_lags;

  std::map<std::string, FirmSeries> firms;
  for (std::size_t i = 0; i < rows.size(); ++i) firms[rows[i].firm_id].row_by_year[rows[i].year] = i;

  std::vector<const FirmSeries*> firm_list;
  for (const auto& [id, f] : firms) firm_list.push_back(&f);

  auto y_at = [&](const FirmSeries& f, int year) {
    auto it = f.row_by_year.find(year);
    return it == f.row_by_year.end() ? std::numeric_limits<double>::quiet_NaN()
                                     : rows[it->second].get(spec.dependent);
  };
  auto x_at = [&](const FirmSeries& f, int year, const std::string& name) {
    auto it = f.row_by_year.find(year);
    return it == f.row_by_year.end() ? std::numeric_limits<double>::quiet_NaN() : rows[it->second].get(name);
  };

  // Longest run of consecutive years with an observed dependent, over firms.
  int longest = 0;
  for (const auto* f : firm_list) {
    int run = 0, prev = 0;
    for (const auto& [year, idx] : f->row_by_year) {
      const bool ok = std::isfinite(rows[idx].get(spec.dependent));
      run = ok ? ((run > 0 && year == prev + 1) ? run + 1 : 1) : 0;
      prev = year;
      longest = std::max(longest, run);
    }
  }
  if (longest < lags + 2)
    throw InsufficientDataError("AB-GMM needs at least " + std::to_string(lags + 2) +
                                " consecutive periods per firm; longest run is " + std::to_string(longest));

  const std::size_t kx = spec.regressors.size();
  std::vector<std::string> names;
  for (int l = 1; l <= lags; ++l) names.push_back("L" + std::to_string(l) + "." + spec.dependent);
  for (const auto& r : spec.regressors) names.push_back(r);

  // Estimating equations.
  std::vector<std::vector<Equation>> eqs(firm_list.size());
  std::set<int> periods;
  int min_year = std::numeric_limits<int>::max();
  for (const auto& r : rows) min_year = std::min(min_year, r.year);
  for (std::size_t fi = 0; fi < firm_list.size(); ++fi) {
    const FirmSeries& f = *firm_list[fi];
    for (const auto& [year, idx] : f.row_by_year) {
      if (include && !(*include)[idx]) continue;
      bool ok = true;
      for (int l = 0; l <= lags + 1 && ok; ++l) ok = std::isfinite(y_at(f, year - l));
      Eigen::VectorXd dx(static_cast<Eigen::Index>(lags + kx));
      for (int l = 1; l <= lags && ok; ++l) dx(l - 1) = y_at(f, year - l) - y_at(f, year - l - 1);
      for (std::size_t j = 0; j < kx && ok; ++j) {
        const double now = x_at(f, year, spec.regressors[j]);
        const double before = x_at(f, year - 1, spec.regressors[j]);
        ok = std::isfinite(now) && std::isfinite(before);
        if (ok) dx(static_cast<Eigen::Index>(lags + j)) = now - before;
      }
      if (!ok) continue;
      eqs[fi].push_back({fi, year, y_at(f, year) - y_at(f, year - 1), std::move(dx)});
      periods.insert(year);
    }
  }

  // Instrument columns: (period, lag) for lagged levels of the dependent,
  // then the differenced exogenous regressors, then optional period dummies.
  std::vector<std::pair<int, int>> gmm_cols;
  std::map<int, int> per_period_count;
  for (int t : periods) {
    int count = 0;
    for (int lag = 2; t - lag >= min_year; ++lag) {
      if (spec.max_instruments_per_period > 0 && count >= spec.max_instruments_per_period) break;
      gmm_cols.emplace_back(t, lag);
      ++count;
    }
    per_period_count[t] = count;
  }
  const std::vector<int> period_list(periods.begin(), periods.end());
  const std::size_t n_dummies = spec.time_dummies && period_list.size() > 1 ? period_list.size() - 1 : 0;
  for (std::size_t d = 0; d < n_dummies; ++d) names.push_back("period=" + std::to_string(period_list[d + 1]));
  const auto k = static_cast<Eigen::Index>(names.size());
  const auto m = static_cast<Eigen::Index>(gmm_cols.size() + kx + n_dummies);

  std::map<std::pair<int, int>, Eigen::Index> gmm_index;
  for (std::size_t c = 0; c < gmm_cols.size(); ++c) gmm_index[gmm_cols[c]] = static_cast<Eigen::Index>(c);

  struct FirmBlock {
    Eigen::MatrixXd z, x;
    Eigen::VectorXd y;
    Eigen::MatrixXd h;
  };
  std::vector<FirmBlock> blocks;
  std::size_t n_eq = 0;
  for (std::size_t fi = 0; fi < firm_list.size(); ++fi) {
    const auto& e = eqs[fi];
    if (e.empty()) continue;
    const FirmSeries& f = *firm_list[fi];
    const auto ti = static_cast<Eigen::Index>(e.size());
    FirmBlock b;
    b.z = Eigen::MatrixXd::Zero(ti, m);
    b.x = Eigen::MatrixXd::Zero(ti, k);
    b.y.resize(ti);
    b.h = Eigen::MatrixXd::Zero(ti, ti);
    for (Eigen::Index r = 0; r < ti; ++r) {
      const Equation& q = e[static_cast<std::size_t>(r)];
      b.y(r) = q.dy;
      b.x.row(r).head(q.dx.size()) = q.dx.transpose();
      for (int lag = 2;; ++lag) {
        auto it = gmm_index.find({q.year, lag});
        if (it == gmm_index.end()) break;
        const double level = y_at(f, q.year - lag);
        if (std::isfinite(level)) b.z(r, it->second) = level;
      }
      b.z.row(r).segment(static_cast<Eigen::Index>(gmm_cols.size()), static_cast<Eigen::Index>(kx)) =
          q.dx.tail(static_cast<Eigen::Index>(kx)).transpose();
      if (n_dummies > 0) {
        const auto pos = std::lower_bound(period_list.begin(), period_list.end(), q.year) - period_list.begin();
        if (pos > 0) {
          b.x(r, static_cast<Eigen::Index>(lags + kx) + pos - 1) = 1.0;
          b.z(r, static_cast<Eigen::Index>(gmm_cols.size() + kx) + pos - 1) = 1.0;
        }
      }
      b.h(r, r) = 2.0;
      if (r > 0 && e[static_cast<std::size_t>(r - 1)].year == q.year - 1) {
        b.h(r, r - 1) = -1.0;
        b.h(r - 1, r) = -1.0;
      }
    }
    n_eq += e.size();
    blocks.push_back(std::move(b));
  }
  if (n_eq == 0) throw InsufficientDataError("AB-GMM: no usable estimating equations");

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd zx = Eigen::MatrixXd::Zero(m, k);
  Eigen::VectorXd zy = Eigen::VectorXd::Zero(m);
  for (const auto& b : blocks) {
    a.noalias() += b.z.transpose() * b.h * b.z;
    zx.noalias() += b.z.transpose() * b.x;
    zy.noalias() += b.z.transpose() * b.y;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(zx);
  rank_check.setThreshold(1e-10);
  if (rank_check.rank() < k) {
    std::string counts;
    for (const auto& [t, c] : per_period_count) counts += (counts.empty() ? "" : ", ") + std::to_string(t) + ":" + std::to_string(c);
    throw SingularDesignError("AB-GMM instrument matrix is rank deficient (rank " + std::to_string(rank_check.rank()) +
                              " < " + std::to_string(k) + "); lagged-level instruments per period: " + counts);
  }

  const Eigen::MatrixXd w = a.completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::MatrixXd xzw = zx.transpose() * w;
  const Eigen::MatrixXd normal = xzw * zx;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
  if (ldlt.info() != Eigen::Success) throw SingularDesignError("AB-GMM normal matrix is singular");
  const Eigen::VectorXd beta = ldlt.solve(xzw * zy);
  const Eigen::MatrixXd normal_inv = ldlt.solve(Eigen::MatrixXd::Identity(k, k));

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd residuals(static_cast<Eigen::Index>(n_eq));
  Eigen::Index pos = 0;
  for (const auto& b : blocks) {
    const Eigen::VectorXd e = b.y - b.x * beta;
    const Eigen::VectorXd ze = b.z.transpose() * e;
    meat.noalias() += ze * ze.transpose();
    residuals.segment(pos, e.size()) = e;
    pos += e.size();
  }

  RegressionResult r;
  r.names = names;
  r.coefficients = beta;
  r.covariance = normal_inv * (xzw * meat * xzw.transpose()) * normal_inv;
  r.residuals = residuals;
  r.n_obs = n_eq;
  r.iterations = 1;
  r.converged = true;
  r.fit_stat = std::numeric_limits<double>::quiet_NaN();
  r.diagnostics.push_back("instruments: " + std::to_string(m) + ", firms: " + std::to_string(blocks.size()));
  r.standard_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.stats = r.coefficients.cwiseQuotient(r.standard_errors);
  r.p_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) r.p_values(j) = dist::normal_two_sided_p(r.stats(j));
  r.stat_kind = "z";
  return r;
}

}  // namespace crashrisk::econ
