#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crashrisk/crash_measures.hpp"
#include "crashrisk/data_panel.hpp"
#include "crashrisk/sentiment.hpp"

namespace crashrisk::econ {

// One (firm, year) observation with named numeric fields; NaN or absent
// means missing.
struct PanelRow {
  std::string firm_id;
  int year = 0;
  std::string industry;
  std::map<std::string, double> values;

  double get(const std::string& name) const;
};

enum class Family { Linear, Logit };
enum class RobustSe { None, HC0, HC1 };

std::string_view to_string(RobustSe se);
RobustSe parse_robust_se(std::string_view text);

struct RegressionSpec {
  std::string dependent;
  std::vector<std::string> regressors;
  bool industry_fe = true;
  bool year_fe = true;
  Family family = Family::Linear;
  RobustSe robust_se = RobustSe::HC1;
};

struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> column_names;   // "const" first
  std::vector<std::string> dropped_levels; // reference category per fixed effect, e.g. "industry=A"
  std::vector<std::size_t> source_rows;    // panel row index per design row
  std::size_t rows_dropped_missing = 0;
  std::vector<std::string> diagnostics;
};

// Listwise deletion, intercept first, K-1 dummy coding with the lowest
// sorted level as reference. A fixed-effect dimension with a single level is
// skipped with a diagnostic. Rank deficiency throws SingularDesignError naming
// the offending column(s).
DesignMatrix build_design(std::span<const PanelRow> rows, const RegressionSpec& spec);

// Throws SingularDesignError naming columns that are linear combinations of earlier ones.
void check_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& names);

struct RegressionResult {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd standard_errors;
  Eigen::VectorXd stats;     // coefficient / standard error
  Eigen::VectorXd p_values;  // two-sided
  std::string stat_kind;     // "t" or "z"
  std::size_t n_obs = 0;
  double fit_stat = 0.0;     // R^2 (linear) or McFadden pseudo-R^2 (logit)
  double log_likelihood = 0.0;
  bool converged = true;
  int iterations = 0;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd residuals;
  std::vector<std::string> diagnostics;

  std::optional<std::size_t> index_of(const std::string& name) const;
};

RegressionResult ols_fit(const DesignMatrix& design, RobustSe robust_se = RobustSe::HC1);

struct LogitOptions {
  RobustSe robust_se = RobustSe::HC0;  // HC0/HC1 -> sandwich (HC1 adds N/(N-K))
  int max_iter = 100;
  double tol = 1e-8;
};

// Newton-Raphson maximum likelihood with step halving. Throws
// SeparationError on (quasi-)perfect separation.
RegressionResult logit_fit(const DesignMatrix& design, const LogitOptions& options = {});

double logit_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);
Eigen::VectorXd logit_score(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta);

// Max over coefficients of |analytic - central difference| / max(1, |analytic|).
double gradient_check(const DesignMatrix& design, const Eigen::VectorXd& beta, double step = 1e-6);

struct AbGmmSpec {
  std::string dependent;
  int dep_lags = 2;
  std::vector<std::string> regressors;  // strictly exogenous, instrument themselves
  int max_instruments_per_period = 0;   // 0 = all available lags
  bool one_step = true;
  bool time_dummies = false;
};

// One-step Arellano-Bond difference GMM with firm-clustered robust SEs.
// `include` (optional, parallel to `rows`) restricts which rows may serve as
// estimating equations; lags and instruments always come from all rows.
RegressionResult arellano_bond(std::span<const PanelRow> rows, const AbGmmSpec& spec,
                               const std::vector<bool>* include = nullptr);

// 1..4 per row by SIZE within each year (cuts at the 25/50/75th
// percentiles, ties to the lower quartile); 0 when SIZE is missing.
std::vector<int> size_quartiles(std::span<const PanelRow> rows, const std::string& size_column = "size");

// Joins measures (t and t+1 lead), sentiment and fundamentals by (firm, year).
// Field names: negoutlier, crash, ncskew, duvol (+ "_lead"), sent,
// sent_detoned, ret, sigma, size, mtb, roa, dturn, accm.
std::vector<PanelRow> assemble_model_panel(const std::vector<CrashMeasures>& measures,
                                           const std::vector<sentiment::SentimentRow>& sentiment,
                                           const std::vector<FundamentalsRow>& fundamentals);

struct PaperModelsConfig {
  bool industry_fe = true;
  bool year_fe = true;
  RobustSe ols_se = RobustSe::HC1;
  RobustSe logit_se = RobustSe::HC0;
  bool main_models = true;
  bool size_quartiles = true;
  bool detoned = true;
  int ab_dep_lags = 2;
  int ab_max_instruments = 0;
  unsigned threads = 1;
};

struct ModelOutcome {
  std::string name;
  std::string dependent;
  std::optional<RegressionResult> result;
  std::string error;
};

std::vector<ModelOutcome> run_paper_models(const std::vector<PanelRow>& panel, const PaperModelsConfig& config = {});

std::string significance_stars(double p);
// Long format: model, term, coefficient, std_error, stat, p_value, stars, n_obs, fit_stat.
std::string serialize_results(const std::vector<ModelOutcome>& outcomes);
// Side-by-side text table with standard errors in parentheses.
std::string format_results_table(const std::vector<ModelOutcome>& outcomes, const std::string& title);

}  // namespace crashrisk::econ
