#include "crashrisk/econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/parallel.hpp"
#include "crashrisk/distributions.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk::econ {

double PanelRow::get(const std::string& name) const {
  auto it = values.find(name);
  return it == values.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
}

std::string_view to_string(RobustSe se) {
  switch (se) {
    case RobustSe::None: return "none";
    case RobustSe::HC0: return "hc0";
    case RobustSe::HC1: return "hc1";
  }
  return "none";
}

RobustSe parse_robust_se(std::string_view text) {
  if (text == "none") return RobustSe::None;
  if (text == "hc0") return RobustSe::HC0;
  if (text == "hc1") return RobustSe::HC1;
  throw ConfigError("unknown robust_se '" + std::string(text) + "' (none | hc0 | hc1)");
}

std::optional<std::size_t> RegressionResult::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

void check_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names) {
  const auto k = x.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() == k) return;
  // Walk columns left to right; a column that adds no rank is offending.
  std::vector<std::string> offending;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::MatrixXd sub(x.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
    for (std::size_t c = 0; c < kept.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = x.col(kept[c]);
    sub.col(sub.cols() - 1) = x.col(j);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> step(sub);
    step.setThreshold(1e-10);
    if (step.rank() == sub.cols()) {
      kept.push_back(j);
    } else {
      offending.push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  std::string list;
  for (const auto& o : offending) list += (list.empty() ? "" : ", ") + o;
  throw SingularDesignError("design matrix is rank deficient; collinear column(s): " + list);
}

DesignMatrix build_design(std::span<const PanelRow> rows, const RegressionSpec& spec) {
  DesignMatrix d;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    bool ok = std::isfinite(rows[i].get(spec.dependent));
    for (const auto& r : spec.regressors) ok = ok && std::isfinite(rows[i].get(r));
    if (ok) {
      keep.push_back(i);
    } else {
      ++d.rows_dropped_missing;
    }
  }

  std::vector<std::string> industries;
  std::vector<int> years;
  if (spec.industry_fe) {
    std::set<std::string> s;
    for (auto i : keep) s.insert(rows[i].industry);
    industries.assign(s.begin(), s.end());
    if (industries.size() < 2) {
      d.diagnostics.push_back("industry fixed effect skipped: single level");
      industries.clear();
    }
  }
  if (spec.year_fe) {
    std::set<int> s;
    for (auto i : keep) s.insert(rows[i].year);
    years.assign(s.begin(), s.end());
    if (years.size() < 2) {
      d.diagnostics.push_back("year fixed effect skipped: single level");
      years.clear();
    }
  }

  d.column_names.push_back("const");
  for (const auto& r : spec.regressors) d.column_names.push_back(r);
  if (!industries.empty()) {
    d.dropped_levels.push_back("industry=" + industries.front());
    for (std::size_t l = 1; l < industries.size(); ++l) d.column_names.push_back("industry=" + industries[l]);
  }
  if (!years.empty()) {
    d.dropped_levels.push_back("year=" + std::to_string(years.front()));
    for (std::size_t l = 1; l < years.size(); ++l) d.column_names.push_back("year=" + std::to_string(years[l]));
  }

  const auto n = static_cast<Eigen::Index>(keep.size());
  const auto k = static_cast<Eigen::Index>(d.column_names.size());
  d.x = Eigen::MatrixXd::Zero(n, k);
  d.y.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const PanelRow& row = rows[keep[static_cast<std::size_t>(r)]];
    d.y(r) = row.get(spec.dependent);
    d.x(r, 0) = 1.0;
    Eigen::Index c = 1;
    for (const auto& name : spec.regressors) d.x(r, c++) = row.get(name);
    if (!industries.empty()) {
      const auto pos = std::lower_bound(industries.begin(), industries.end(), row.industry) - industries.begin();
      if (pos > 0) d.x(r, c + pos - 1) = 1.0;
      c += static_cast<Eigen::Index>(industries.size()) - 1;
    }
    if (!years.empty()) {
      const auto pos = std::lower_bound(years.begin(), years.end(), row.year) - years.begin();
      if (pos > 0) d.x(r, c + pos - 1) = 1.0;
    }
  }
  d.source_rows = std::move(keep);
  if (n > 0) check_rank(d.x, d.column_names);
  return d;
}

namespace {

void finish_inference(RegressionResult& r, bool t_stats, double dof) {
  const auto k = r.coefficients.size();
  r.standard_errors = r.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.stats.resize(k);
  r.p_values.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    r.stats(j) = r.coefficients(j) / r.standard_errors(j);
    r.p_values(j) = t_stats ? dist::student_t_two_sided_p(r.stats(j), dof) : dist::normal_two_sided_p(r.stats(j));
  }
  r.stat_kind = t_stats ? "t" : "z";
}

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& a) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SingularDesignError("information matrix is singular");
  return ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
}

double softplus(double eta) { return std::max(eta, 0.0) + std::log1p(std::exp(-std::abs(eta))); }

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

RegressionResult ols_fit(const DesignMatrix& design, RobustSe robust_se) {
  const auto n = design.x.rows();
  const auto k = design.x.cols();
  if (n <= k) throw InsufficientDataError("OLS needs more observations than coefficients");
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) throw SingularDesignError("OLS design is rank deficient");

  RegressionResult r;
  r.names = design.column_names;
  r.coefficients = qr.solve(design.y);
  r.residuals = design.y - design.x * r.coefficients;
  r.n_obs = static_cast<std::size_t>(n);
  r.diagnostics = design.diagnostics;

  const Eigen::MatrixXd bread = inverse_spd(design.x.transpose() * design.x);
  const double rss = r.residuals.squaredNorm();
  const double dof = static_cast<double>(n - k);
  if (robust_se == RobustSe::None) {
    r.covariance = bread * (rss / dof);
  } else {
    const Eigen::MatrixXd xe = design.x.array().colwise() * r.residuals.array();
    const Eigen::MatrixXd meat = xe.transpose() * xe;
    r.covariance = bread * meat * bread;
    if (robust_se == RobustSe::HC1) r.covariance *= static_cast<double>(n) / dof;
  }
  const double ybar = design.y.mean();
  const double tss = (design.y.array() - ybar).square().sum();
  r.fit_stat = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  r.log_likelihood = -0.5 * static_cast<double>(n) * (std::log(2.0 * M_PI * rss / static_cast<double>(n)) + 1.0);
  finish_inference(r, true, dof);
  return r;
}

double logit_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll;
}

Eigen::VectorXd logit_score(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = x * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = y(i) - sigmoid(eta(i));
  return x.transpose() * resid;
}

RegressionResult logit_fit(const DesignMatrix& design, const LogitOptions& options) {
  const auto& x = design.x;
  const auto& y = design.y;
  const auto n = x.rows();
  const auto k = x.cols();
  if (n <= k) throw InsufficientDataError("logit needs more observations than coefficients");
  std::size_t ones = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("logit dependent must be 0/1");
    if (y(i) == 1.0) ++ones;
  }
  if (ones == 0 || ones == static_cast<std::size_t>(n)) throw DataError("logit dependent has a single class");
  check_rank(x, design.column_names);

  RegressionResult r;
  r.names = design.column_names;
  r.n_obs = static_cast<std::size_t>(n);
  r.diagnostics = design.diagnostics;
  r.converged = false;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double ll = logit_log_likelihood(x, y, beta);
  Eigen::VectorXd p(n);
  Eigen::MatrixXd info;
  for (int it = 1; it <= options.max_iter; ++it) {
    r.iterations = it;
    const Eigen::VectorXd eta = x * beta;
    for (Eigen::Index i = 0; i < n; ++i) p(i) = sigmoid(eta(i));
    const Eigen::VectorXd score = x.transpose() * (y - p);
    const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
    info = x.transpose() * (x.array().colwise() * w.array()).matrix();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const Eigen::VectorXd step = ldlt.solve(score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) break;
    // A vanishing score alone is not enough: under separation the score
    // decays while Newton steps stay near one.
    if (score.cwiseAbs().maxCoeff() < options.tol && step.cwiseAbs().maxCoeff() < 1e-4) {
      r.converged = true;
      break;
    }

    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double ll_new = logit_log_likelihood(x, y, candidate);
    for (int halvings = 0; halvings < 40 && !(ll_new >= ll); ++halvings) {
      scale *= 0.5;
      candidate = beta + scale * step;
      ll_new = logit_log_likelihood(x, y, candidate);
    }
    const double change = std::abs(ll_new - ll) / std::max(std::abs(ll), 1e-300);
    beta = candidate;
    ll = ll_new;
    if ((x * beta).cwiseAbs().maxCoeff() > 60.0) break;
    // A flat likelihood with steps that do not shrink is drift toward infinity.
    if (change < 1e-10 && (scale * step).cwiseAbs().maxCoeff() < 1e-4) {
      r.converged = true;
      break;
    }
  }

  const Eigen::VectorXd eta = x * beta;
  for (Eigen::Index i = 0; i < n; ++i) p(i) = sigmoid(eta(i));
  const double max_abs_resid = (y - p).cwiseAbs().maxCoeff();
  // Divergence is judged on coefficients scaled by their regressor's spread,
  // so a tiny-variance regressor with a large but finite slope is not flagged.
  double scaled = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double mean = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - mean).square().sum() / static_cast<double>(n));
    scaled = std::max(scaled, std::abs(beta(j)) * (sd > 0.0 ? sd : 1.0));
  }
  if (scaled > 30.0 || eta.cwiseAbs().maxCoeff() > 30.0 || max_abs_resid < 1e-6)
    throw SeparationError("perfect separation: coefficients diverge (max scaled |beta| = " +
                          std::to_string(scaled) + ")");

  const Eigen::VectorXd w = (p.array() * (1.0 - p.array())).matrix();
  info = x.transpose() * (x.array().colwise() * w.array()).matrix();
  const Eigen::MatrixXd bread = inverse_spd(info);
  if (options.robust_se == RobustSe::None) {
    r.covariance = bread;
  } else {
    const Eigen::MatrixXd s = x.array().colwise() * (y - p).array();
    r.covariance = bread * (s.transpose() * s) * bread;
    if (options.robust_se == RobustSe::HC1) r.covariance *= static_cast<double>(n) / static_cast<double>(n - k);
  }
  r.coefficients = beta;
  r.residuals = y - p;
  r.log_likelihood = ll;
  const double ybar = static_cast<double>(ones) / static_cast<double>(n);
  const double ll_null = static_cast<double>(n) * (ybar * std::log(ybar) + (1.0 - ybar) * std::log(1.0 - ybar));
  r.fit_stat = 1.0 - ll / ll_null;
  finish_inference(r, false, 0.0);
  return r;
}

double gradient_check(const DesignMatrix& design, const Eigen::VectorXd& beta, double step) {
  const Eigen::VectorXd analytic = logit_score(design.x, design.y, beta);
  double worst = 0.0;
  Eigen::VectorXd b = beta;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    b(j) = beta(j) + step;
    const double up = logit_log_likelihood(design.x, design.y, b);
    b(j) = beta(j) - step;
    const double down = logit_log_likelihood(design.x, design.y, b);
    b(j) = beta(j);
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic(j) - numeric) / std::max(1.0, std::abs(analytic(j))));
  }
  return worst;
}

std::vector<int> size_quartiles(std::span<const PanelRow> rows, const std::string& size_column) {
  std::map<int, std::vector<double>> by_year;
  for (const auto& r : rows) {
    const double s = r.get(size_column);
    if (std::isfinite(s)) by_year[r.year].push_back(s);
  }
  std::map<int, std::array<double, 3>> cuts;
  for (auto& [year, v] : by_year) {
    std::sort(v.begin(), v.end());
    auto pct = [&](double q) {
      const double pos = q * static_cast<double>(v.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, v.size() - 1);
      return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    cuts[year] = {pct(0.25), pct(0.5), pct(0.75)};
  }
  std::vector<int> out(rows.size(), 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double s = rows[i].get(size_column);
    if (!std::isfinite(s)) continue;
    const auto& c = cuts[rows[i].year];
    out[i] = s <= c[0] ? 1 : s <= c[1] ? 2 : s <= c[2] ? 3 : 4;
  }
  return out;
}

std::vector<PanelRow> assemble_model_panel(const std::vector<CrashMeasures>& measures,
                                           const std::vector<sentiment::SentimentRow>& sentiment,
                                           const std::vector<FundamentalsRow>& fundamentals) {
  std::map<FirmYear, const CrashMeasures*> m;
  for (const auto& x : measures) m[{x.firm_id, x.year}] = &x;
  std::map<FirmYear, const sentiment::SentimentRow*> s;
  for (const auto& x : sentiment) s[{x.firm_id, x.year}] = &x;

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  auto opt = [](const auto& o) { return o ? static_cast<double>(*o) : nan; };

  std::vector<const FundamentalsRow*> sorted;
  for (const auto& f : fundamentals) sorted.push_back(&f);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return std::tie(a->firm_id, a->fiscal_year) < std::tie(b->firm_id, b->fiscal_year);
  });

  std::vector<PanelRow> panel;
  for (const auto* f : sorted) {
    const FirmYear key{f->firm_id, f->fiscal_year};
    auto mi = m.find(key);
    if (mi == m.end()) continue;
    const CrashMeasures& cm = *mi->second;
    PanelRow row;
    row.firm_id = f->firm_id;
    row.year = f->fiscal_year;
    row.industry = f->industry;
    row.values["negoutlier"] = opt(cm.negoutlier);
    row.values["crash"] = opt(cm.crash);
    row.values["ncskew"] = opt(cm.ncskew);
    row.values["duvol"] = opt(cm.duvol);
    row.values["ret"] = cm.ret;
    row.values["sigma"] = cm.sigma;
    auto lead = m.find({f->firm_id, f->fiscal_year + 1});
    const CrashMeasures* next = lead == m.end() ? nullptr : lead->second;
    row.values["negoutlier_lead"] = next ? opt(next->negoutlier) : nan;
    row.values["crash_lead"] = next ? opt(next->crash) : nan;
    row.values["ncskew_lead"] = next ? opt(next->ncskew) : nan;
    row.values["duvol_lead"] = next ? opt(next->duvol) : nan;
    auto si = s.find(key);
    row.values["sent"] = si == s.end() ? nan : opt(si->second->sent);
    row.values["sent_detoned"] = si == s.end() ? nan : opt(si->second->sent_detoned);
    for (auto c : {"size", "mtb", "roa", "dturn", "accm"}) row.values[c] = fundamental_value(*f, c);
    panel.push_back(std::move(row));
  }
  return panel;
}

namespace {

const std::vector<std::string> kControls = {"ret", "size", "mtb", "roa", "sigma", "dturn", "accm"};

std::vector<std::string> with_controls(std::vector<std::string> head) {
  head.insert(head.end(), kControls.begin(), kControls.end());
  return head;
}

}  // namespace

std::vector<ModelOutcome> run_paper_models(const std::vector<PanelRow>& panel, const PaperModelsConfig& config) {
  struct Job {
    std::string name;
    std::string dependent;
    std::function<RegressionResult()> run;
  };
  std::vector<Job> jobs;

  auto regression = [&](std::vector<PanelRow> rows, RegressionSpec spec) {
    return [rows = std::move(rows), spec, &config]() {
      const DesignMatrix d = build_design(rows, spec);
      if (spec.family == Family::Logit) {
        LogitOptions o;
        o.robust_se = config.logit_se;
        return logit_fit(d, o);
      }
      return ols_fit(d, config.ols_se);
    };
  };
  auto spec_for = [&](std::string dep, std::vector<std::string> regs, Family fam) {
    RegressionSpec s;
    s.dependent = std::move(dep);
    s.regressors = std::move(regs);
    s.family = fam;
    s.industry_fe = config.industry_fe;
    s.year_fe = config.year_fe;
    s.robust_se = fam == Family::Logit ? config.logit_se : config.ols_se;
    return s;
  };

  if (config.main_models) {
    jobs.push_back({"table3_negoutlier", "negoutlier_lead",
                    regression(panel, spec_for("negoutlier_lead", with_controls({"sent", "ncskew"}), Family::Logit))});
    jobs.push_back({"table3_crash", "crash_lead",
                    regression(panel, spec_for("crash_lead", with_controls({"sent", "ncskew"}), Family::Logit))});
    jobs.push_back({"table3_ncskew", "ncskew_lead",
                    regression(panel, spec_for("ncskew_lead", with_controls({"sent", "duvol"}), Family::Linear))});
    jobs.push_back({"table3_duvol", "duvol_lead",
                    regression(panel, spec_for("duvol_lead", with_controls({"sent", "ncskew"}), Family::Linear))});
  }

  const std::vector<int> quartile = size_quartiles(panel);
  if (config.size_quartiles) {
    for (int q = 4; q >= 1; --q) {
      auto mask = std::make_shared<std::vector<bool>>(panel.size());
      for (std::size_t i = 0; i < panel.size(); ++i) (*mask)[i] = quartile[i] == q;
      AbGmmSpec ab;
      ab.dependent = "negoutlier_lead";
      ab.dep_lags = config.ab_dep_lags;
      ab.max_instruments_per_period = config.ab_max_instruments;
      ab.regressors = {"ret", "size", "mtb", "roa", "sigma", "sent", "dturn", "ncskew"};
      jobs.push_back({"table5_size_q" + std::to_string(q), "negoutlier_lead",
                      [&panel, ab, mask]() { return arellano_bond(panel, ab, mask.get()); }});
    }
  }

  if (config.detoned) {
    const auto regs = std::vector<std::string>{"ncskew", "ret", "size", "mtb", "roa", "sigma", "sent_detoned", "dturn", "accm"};
    jobs.push_back({"table6_detoned_all", "negoutlier_lead",
                    regression(panel, spec_for("negoutlier_lead", regs, Family::Logit))});
    for (int q = 4; q >= 1; --q) {
      std::vector<PanelRow> subset;
      for (std::size_t i = 0; i < panel.size(); ++i)
        if (quartile[i] == q) subset.push_back(panel[i]);
      jobs.push_back({"table6_detoned_size_q" + std::to_string(q), "negoutlier_lead",
                      regression(std::move(subset), spec_for("negoutlier_lead", regs, Family::Logit))});
    }
  }

  std::vector<ModelOutcome> out(jobs.size());
  parallel_for(jobs.size(), config.threads, [&](std::size_t i) {
    out[i].name = jobs[i].name;
    out[i].dependent = jobs[i].dependent;
    try {
      out[i].result = jobs[i].run();
    } catch (const Error& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

std::string significance_stars(double p) {
  if (!(p == p)) return "";
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

std::string serialize_results(const std::vector<ModelOutcome>& outcomes) {
  csv::Writer w({"model", "dependent", "term", "coefficient", "std_error", "stat_kind", "stat", "p_value", "stars",
                 "n_obs", "fit_stat", "converged", "error"});
  for (const auto& o : outcomes) {
    if (!o.result) {
      w.row({o.name, o.dependent, "", "", "", "", "", "", "", "", "", "", o.error});
      continue;
    }
    const auto& r = *o.result;
    for (std::size_t j = 0; j < r.names.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      w.row({o.name, o.dependent, r.names[j], csv::format_number(r.coefficients(jj)),
             csv::format_number(r.standard_errors(jj)), r.stat_kind, csv::format_number(r.stats(jj)),
             csv::format_number(r.p_values(jj)), significance_stars(r.p_values(jj)), std::to_string(r.n_obs),
             csv::format_number(r.fit_stat), r.converged ? "1" : "0", ""});
    }
  }
  return w.str();
}

namespace {

std::string display_term(const std::string& term) {
  if (term == "const") return "Constant";
  if (term.rfind("L", 0) == 0 && term.find('.') != std::string::npos) {
    const auto dot = term.find('.');
    const int lag = std::atoi(term.substr(1, dot - 1).c_str());
    std::string s = term.substr(dot + 1);
    std::transform(s.begin(), s.end(), s.begin(), ::toupper);
    // A lag of a one-year-ahead dependent is dated relative to t.
    if (s.size() > 5 && s.compare(s.size() - 5, 5, "_LEAD") == 0) {
      s.resize(s.size() - 5);
      const int shift = lag - 1;
      return shift == 0 ? s + "_t" : s + "_t-" + std::to_string(shift);
    }
    return s + "_t-" + std::to_string(lag);
  }
  std::string s = term;
  std::transform(s.begin(), s.end(), s.begin(), ::toupper);
  return s + "_t";
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string fmt_coef(double v) {
  const double a = std::abs(v);
  char buf[32];
  if (a != 0.0 && (a < 1e-3 || a >= 1e5)) {
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  } else {
    std::snprintf(buf, sizeof(buf), "%.4f", v);
  }
  return buf;
}

}  // namespace

std::string format_results_table(const std::vector<ModelOutcome>& outcomes, const std::string& title) {
  std::vector<std::string> terms;
  bool any_industry = false, any_year = false;
  for (const auto& o : outcomes) {
    if (!o.result) continue;
    for (const auto& t : o.result->names) {
      if (t.rfind("industry=", 0) == 0) {
        any_industry = true;
        continue;
      }
      if (t.rfind("year=", 0) == 0) {
        any_year = true;
        continue;
      }
      if (t != "const" && std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
    }
  }
  bool any_const = false;
  for (const auto& o : outcomes) any_const = any_const || (o.result && o.result->index_of("const"));
  if (any_const) terms.push_back("const");

  std::size_t label_w = 16, col_w = 16;
  for (const auto& t : terms) label_w = std::max(label_w, display_term(t).size() + 2);
  for (const auto& o : outcomes) col_w = std::max(col_w, o.name.size() + 2);
  std::string out = title + "\n";
  std::string line = pad("", label_w);
  for (const auto& o : outcomes) line += pad(o.name, col_w);
  out += line + "\n";
  line = pad("", label_w);
  for (const auto& o : outcomes) {
    std::string dep = o.dependent;
    if (dep.size() > 5 && dep.compare(dep.size() - 5, 5, "_lead") == 0) dep.resize(dep.size() - 5);
    std::transform(dep.begin(), dep.end(), dep.begin(), ::toupper);
    line += pad(dep + "_t+1", col_w);
  }
  out += line + "\n";

  for (const auto& t : terms) {
    std::string coef_line = pad(display_term(t), label_w);
    std::string se_line = pad("", label_w);
    for (const auto& o : outcomes) {
      std::optional<std::size_t> j;
      if (o.result) j = o.result->index_of(t);
      if (!j) {
        coef_line += pad("", col_w);
        se_line += pad("", col_w);
        continue;
      }
      const auto jj = static_cast<Eigen::Index>(*j);
      coef_line += pad(fmt_coef(o.result->coefficients(jj)) + significance_stars(o.result->p_values(jj)), col_w);
      se_line += pad("(" + fmt_coef(o.result->standard_errors(jj)) + ")", col_w);
    }
    out += coef_line + "\n" + se_line + "\n";
  }
  std::string obs = pad("Observations", label_w), fit = pad("R2 / pseudo-R2", label_w);
  std::string ind = pad("Industry FE", label_w), yr = pad("Year FE", label_w);
  for (const auto& o : outcomes) {
    if (!o.result) {
      obs += pad("failed", col_w);
      fit += pad("", col_w);
      ind += pad("", col_w);
      yr += pad("", col_w);
      continue;
    }
    obs += pad(std::to_string(o.result->n_obs), col_w);
    fit += pad(std::isfinite(o.result->fit_stat) ? fmt_coef(o.result->fit_stat) : "", col_w);
    bool has_ind = false, has_yr = false;
    for (const auto& t : o.result->names) {
      has_ind = has_ind || t.rfind("industry=", 0) == 0;
      has_yr = has_yr || t.rfind("year=", 0) == 0;
    }
    ind += pad(has_ind ? "Yes" : "No", col_w);
    yr += pad(has_yr ? "Yes" : "No", col_w);
  }
  out += obs + "\n" + fit + "\n";
  if (any_industry || any_year) out += ind + "\n" + yr + "\n";
  for (const auto& o : outcomes)
    if (!o.result) out += o.name + " failed: " + o.error + "\n";
  out += "Standard errors in parentheses. * p < 0.1, ** p < 0.05, *** p < 0.01\n";
  return out;
}

}  // namespace crashrisk::econ
