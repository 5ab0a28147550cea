#include "crashrisk/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <tuple>
#include <cmath>
#include <map>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/rng.hpp"
#include "crashrisk/distributions.hpp"
#include "crashrisk/error.hpp"
#include "crashrisk/market_model.hpp"
#include "json.hpp"

namespace crashrisk {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

ColumnMapping mapping_from(const json& j) {
  ColumnMapping m;
  if (j.is_object())
    for (auto it = j.begin(); it != j.end(); ++it) m.rename[it.key()] = it.value().get<std::string>();
  return m;
}

json mapping_to(const ColumnMapping& m) {
  json j = json::object();
  for (const auto& [k, v] : m.rename) j[k] = v;
  return j;
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be an object");

  PipelineConfig c;
  const json inputs = j.value("inputs", json::object());
  c.returns_path = resolve(base_dir, get_or<std::string>(inputs, "returns", c.returns_path.string()));
  c.fundamentals_path = resolve(base_dir, get_or<std::string>(inputs, "fundamentals", c.fundamentals_path.string()));
  const json columns = j.value("columns", json::object());
  c.returns_columns = mapping_from(columns.value("returns", json::object()));
  c.fundamentals_columns = mapping_from(columns.value("fundamentals", json::object()));

  const json filters = j.value("filters", json::object());
  c.filters.min_nonzero_frac = get_or(filters, "min_nonzero_frac", c.filters.min_nonzero_frac);
  c.filters.min_weeks_per_year = get_or(filters, "min_weeks_per_year", c.filters.min_weeks_per_year);

  const json m = j.value("mcd", json::object());
  c.mcd.n_starts = get_or(m, "n_starts", c.mcd.n_starts);
  c.mcd.max_csteps = get_or(m, "max_csteps", c.mcd.max_csteps);
  c.mcd.exhaustive_threshold = get_or(m, "exhaustive_threshold", c.mcd.exhaustive_threshold);
  c.mcd.quantile = get_or(m, "quantile", c.mcd.quantile);
  c.mcd.consistency_correction = get_or(m, "consistency_correction", c.mcd.consistency_correction);
  c.mcd_audit = get_or(m, "audit", c.mcd_audit);

  c.crash_sigma = get_or(j, "crash_sigma", c.crash_sigma);

  const json s = j.value("sentiment", json::object());
  c.sentiment.mode = sentiment::parse_loading_mode(get_or<std::string>(s, "mode", "fixed_paper"));
  c.sentiment.detone = get_or(s, "detone", c.sentiment.detone);
  if (s.contains("winsorize") && !s["winsorize"].is_null()) {
    const auto& w = s["winsorize"];
    if (!w.is_array() || w.size() != 2) throw ConfigError("sentiment.winsorize must be [lower, upper] or null");
    c.sentiment.winsorize = std::make_pair(w[0].get<double>(), w[1].get<double>());
  }

  const json r = j.value("regressions", json::object());
  c.regressions.main_models = get_or(r, "main", c.regressions.main_models);
  c.regressions.size_quartiles = get_or(r, "size_quartiles", c.regressions.size_quartiles);
  c.regressions.detoned = get_or(r, "detoned", c.regressions.detoned);
  c.regressions.industry_fe = get_or(r, "industry_fe", c.regressions.industry_fe);
  c.regressions.year_fe = get_or(r, "year_fe", c.regressions.year_fe);
  c.regressions.ols_se = econ::parse_robust_se(get_or<std::string>(r, "ols_se", "hc1"));
  c.regressions.logit_se = econ::parse_robust_se(get_or<std::string>(r, "logit_se", "hc0"));
  c.regressions.ab_dep_lags = get_or(r, "ab_dep_lags", c.regressions.ab_dep_lags);
  c.regressions.ab_max_instruments = get_or(r, "ab_max_instruments", c.regressions.ab_max_instruments);

  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", c.output_dir.string()));
  c.seed = get_or(j, "seed", c.seed);
  c.threads = get_or(j, "threads", c.threads);
  c.validate();
  return c;
}

std::string PipelineConfig::to_json_text() const {
  json j;
  j["inputs"] = {{"returns", returns_path.string()}, {"fundamentals", fundamentals_path.string()}};
  j["columns"] = {{"returns", mapping_to(returns_columns)}, {"fundamentals", mapping_to(fundamentals_columns)}};
  j["filters"] = {{"min_nonzero_frac", filters.min_nonzero_frac}, {"min_weeks_per_year", filters.min_weeks_per_year}};
  j["mcd"] = {{"n_starts", mcd.n_starts},
              {"max_csteps", mcd.max_csteps},
              {"exhaustive_threshold", mcd.exhaustive_threshold},
              {"quantile", mcd.quantile},
              {"consistency_correction", mcd.consistency_correction},
              {"audit", mcd_audit}};
  j["crash_sigma"] = crash_sigma;
  j["sentiment"] = {{"mode", std::string(sentiment::to_string(sentiment.mode))},
                    {"detone", sentiment.detone},
                    {"winsorize", sentiment.winsorize ? json::array({sentiment.winsorize->first, sentiment.winsorize->second})
                                                      : json(nullptr)}};
  j["regressions"] = {{"main", regressions.main_models},
                      {"size_quartiles", regressions.size_quartiles},
                      {"detoned", regressions.detoned},
                      {"industry_fe", regressions.industry_fe},
                      {"year_fe", regressions.year_fe},
                      {"ols_se", std::string(econ::to_string(regressions.ols_se))},
                      {"logit_se", std::string(econ::to_string(regressions.logit_se))},
                      {"ab_dep_lags", regressions.ab_dep_lags},
                      {"ab_max_instruments", regressions.ab_max_instruments}};
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  j["threads"] = threads;
  return j.dump(2) + "\n";
}

void PipelineConfig::validate() const {
  mcd::validate(mcd);
  if (!(filters.min_nonzero_frac >= 0.0 && filters.min_nonzero_frac <= 1.0))
    throw ConfigError("filters.min_nonzero_frac must lie in [0, 1]");
  if (filters.min_weeks_per_year < 1) throw ConfigError("filters.min_weeks_per_year must be >= 1");
  if (!(crash_sigma > 0.0)) throw ConfigError("crash_sigma must be positive");
  if (regressions.ab_dep_lags < 1) throw ConfigError("regressions.ab_dep_lags must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return PipelineConfig::from_json_text(csv::read_text(path), path.parent_path());
}

std::string default_pipeline_config_text() {
  PipelineConfig c;
  return c.to_json_text();
}

simlab::SimConfig sim_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("sim config is not valid JSON: ") + e.what());
  }
  simlab::SimConfig c;
  c.n_firms = get_or(j, "n_firms", c.n_firms);
  c.n_years = get_or(j, "n_years", c.n_years);
  c.start_year = get_or(j, "start_year", c.start_year);
  c.weeks_per_year = get_or(j, "weeks_per_year", c.weeks_per_year);
  c.base_sigma = get_or(j, "base_sigma", c.base_sigma);
  c.crash_prob = get_or(j, "crash_prob", c.crash_prob);
  c.crash_magnitude = get_or(j, "crash_magnitude", c.crash_magnitude);
  c.sentiment_effect = get_or(j, "sentiment_effect", c.sentiment_effect);
  c.n_industries = get_or(j, "n_industries", c.n_industries);
  c.seed = get_or(j, "seed", c.seed);
  simlab::validate(c);
  return c;
}

std::string sim_config_to_json_text(const simlab::SimConfig& c) {
  json j;
  j["n_firms"] = c.n_firms;
  j["n_years"] = c.n_years;
  j["start_year"] = c.start_year;
  j["weeks_per_year"] = c.weeks_per_year;
  j["base_sigma"] = c.base_sigma;
  j["crash_prob"] = c.crash_prob;
  j["crash_magnitude"] = c.crash_magnitude;
  j["sentiment_effect"] = c.sentiment_effect;
  j["n_industries"] = c.n_industries;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

simlab::SimConfig load_sim_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("sim config file not found: " + path.string());
  return sim_config_from_json_text(csv::read_text(path));
}

const std::vector<std::string>& deterministic_artifacts() {
  static const std::vector<std::string> names = {
      "cleaned_returns.csv",   "fundamentals_clean.csv", "cleaning_report.csv",     "ingest_diagnostics.csv",
      "market_model_fits.csv", "weekly_returns.csv",     "residual_diagnostics.csv", "crash_measures.csv",
      "mcd_audit.csv",         "plot_distance_histogram.csv", "plot_flag_rate.csv", "sentiment.csv",
      "sentiment_pca.csv",     "regression_results.csv", "regression_tables.txt",   "plot_coefficients.csv"};
  return names;
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) { config_.validate(); }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_file(const fs::path& p, const char* stage) {
  if (!fs::exists(p))
    throw DataError(std::string(stage) + ": missing upstream artifact " + p.string());
}

}  // namespace

void Pipeline::record(const StageReport& report) {
  const fs::path manifest_path = artifact("run_manifest.json");
  json manifest;
  if (fs::exists(manifest_path)) {
    try {
      manifest = json::parse(csv::read_text(manifest_path));
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  const std::string cfg = config_.to_json_text();
  manifest["version"] = kVersion;
  manifest["config_hash"] = [&] {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(cfg)));
    return std::string(buf);
  }();
  manifest["seed"] = config_.seed;
  manifest["threads"] = config_.threads;
  json rows = json::object();
  for (const auto& [k, v] : report.rows) rows[k] = v;
  manifest["stages"][report.stage] = {{"seconds", report.seconds}, {"rows", rows}, {"artifacts", report.artifacts}};
  csv::write_atomic(manifest_path, manifest.dump(2) + "\n");
}

StageReport Pipeline::ingest() {
  const auto t0 = Clock::now();
  for (const auto& p : {config_.returns_path, config_.fundamentals_path})
    if (!fs::exists(p)) throw ConfigError("input file not found: " + p.string());

  auto returns = load_returns(config_.returns_path, config_.returns_columns);
  auto fundamentals = load_fundamentals(config_.fundamentals_path, config_.fundamentals_columns);
  Cleaned cleaned = apply_cleaning_filters(std::move(returns.records), config_.filters);

  std::vector<Diagnostic> diags;
  for (auto& d : returns.diagnostics) {
    d.column = "returns:" + d.column;
    diags.push_back(std::move(d));
  }
  for (auto& d : fundamentals.diagnostics) {
    d.column = "fundamentals:" + d.column;
    diags.push_back(std::move(d));
  }
  std::sort(fundamentals.records.begin(), fundamentals.records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.firm_id, a.fiscal_year) < std::tie(b.firm_id, b.fiscal_year);
  });

  csv::write_atomic(artifact("cleaned_returns.csv"), serialize_returns(cleaned.records));
  csv::write_atomic(artifact("fundamentals_clean.csv"), serialize_fundamentals(fundamentals.records));
  csv::write_atomic(artifact("cleaning_report.csv"), serialize_cleaning_report(cleaned.report));
  csv::write_atomic(artifact("ingest_diagnostics.csv"), serialize_diagnostics(diags));

  StageReport r{"ingest", seconds_since(t0), {}, {"cleaned_returns.csv", "fundamentals_clean.csv", "cleaning_report.csv", "ingest_diagnostics.csv"}};
  r.rows["returns_records"] = cleaned.records.size();
  r.rows["fundamentals_records"] = fundamentals.records.size();
  r.rows["diagnostics"] = diags.size();
  r.rows["firms_out"] = cleaned.report.firms_out;
  record(r);
  return r;
}

StageReport Pipeline::residuals() {
  const auto t0 = Clock::now();
  require_file(artifact("cleaned_returns.csv"), "residuals");
  auto loaded = parse_returns(csv::read_text(artifact("cleaned_returns.csv")));
  const MarketSeries market = build_market_series(loaded.records);
  MarketModelBatch batch = fit_all_firms(loaded.records, market, config_.threads);
  SliceBuild slices = build_firm_year_slices(batch.fits, config_.filters.min_weeks_per_year);

  csv::Writer diag({"firm_id", "week_or_year", "message"});
  for (const auto& f : batch.failures) diag.row({f.firm_id, f.week, f.message});
  for (const auto& d : slices.diagnostics) diag.row({d.firm_id, d.week, d.message});

  csv::write_atomic(artifact("market_model_fits.csv"), serialize_fits(batch.fits));
  csv::write_atomic(artifact("weekly_returns.csv"), serialize_weekly_returns(slices.slices));
  csv::write_atomic(artifact("residual_diagnostics.csv"), diag.str());

  StageReport r{"residuals", seconds_since(t0), {}, {"market_model_fits.csv", "weekly_returns.csv", "residual_diagnostics.csv"}};
  r.rows["firms_fitted"] = batch.fits.size();
  r.rows["firms_failed"] = batch.failures.size();
  r.rows["firm_years"] = slices.slices.size();
  record(r);
  return r;
}

StageReport Pipeline::measures() {
  const auto t0 = Clock::now();
  require_file(artifact("weekly_returns.csv"), "measures");
  const auto slices = parse_weekly_returns(csv::read_text(artifact("weekly_returns.csv")));
  MeasureConfig mc;
  mc.mcd = config_.mcd;
  mc.mcd.seed = config_.seed;
  mc.crash_sigma = config_.crash_sigma;
  const auto measures = compute_all_slices(slices, mc, config_.threads);
  csv::write_atomic(artifact("crash_measures.csv"), serialize_measures(measures));

  // Audit rows and plot data from the stored univariate fits.
  csv::Writer audit({"firm_id", "year", "week", "w", "h", "raw_determinant", "location", "scatter", "d2", "cutoff", "flag"});
  std::vector<double> all_d2;
  std::vector<std::pair<const FirmYearSlice*, const CrashMeasures*>> fitted;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& m = measures[i];
    if (!std::isfinite(m.mcd_location)) continue;
    fitted.emplace_back(&slices[i], &m);
    for (std::size_t k = 0; k < slices[i].w.size(); ++k) {
      const double d = slices[i].w[k] - m.mcd_location;
      const double d2 = d * d / m.mcd_scatter;
      all_d2.push_back(d2);
      if (config_.mcd_audit)
        audit.row({m.firm_id, std::to_string(m.year), slices[i].weeks[k].str(), csv::format_number(slices[i].w[k]),
                   std::to_string(m.mcd_h), csv::format_number(m.mcd_raw_determinant),
                   csv::format_number(m.mcd_location), csv::format_number(m.mcd_scatter), csv::format_number(d2),
                   csv::format_number(m.mcd_cutoff), d2 > m.mcd_cutoff ? "1" : "0"});
    }
  }
  if (config_.mcd_audit) csv::write_atomic(artifact("mcd_audit.csv"), audit.str());

  csv::Writer hist({"bin_lower", "bin_upper", "count"});
  const double width = 1.0;
  const int bins = 40;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins) + 1, 0);
  for (double d2 : all_d2) {
    const auto b = static_cast<std::size_t>(std::min<double>(bins, std::floor(d2 / width)));
    ++counts[b];
  }
  for (int b = 0; b <= bins; ++b)
    hist.row({csv::format_number(b * width), b == bins ? "inf" : csv::format_number((b + 1) * width),
              std::to_string(counts[static_cast<std::size_t>(b)])});
  csv::write_atomic(artifact("plot_distance_histogram.csv"), hist.str());

  csv::Writer curve({"quantile", "cutoff", "week_flag_rate", "negoutlier_rate"});
  for (double q : {0.9, 0.925, 0.95, 0.975, 0.99, 0.995, 0.999}) {
    const double c = dist::chi2_quantile(1.0, q);
    std::size_t flagged = 0, weeks = 0, firm_years = 0;
    for (const auto& [s, m] : fitted) {
      bool neg = false;
      for (double w : s->w) {
        const double d = w - m->mcd_location;
        const bool f = d * d / m->mcd_scatter > c;
        flagged += f;
        ++weeks;
        neg = neg || (f && w < m->mcd_location);
      }
      firm_years += neg;
    }
    curve.row({csv::format_number(q), csv::format_number(c),
               csv::format_number(weeks ? static_cast<double>(flagged) / static_cast<double>(weeks) : 0.0),
               csv::format_number(fitted.empty() ? 0.0 : static_cast<double>(firm_years) / static_cast<double>(fitted.size()))});
  }
  csv::write_atomic(artifact("plot_flag_rate.csv"), curve.str());

  StageReport r{"measures", seconds_since(t0), {}, {"crash_measures.csv", "plot_distance_histogram.csv", "plot_flag_rate.csv"}};
  if (config_.mcd_audit) r.artifacts.push_back("mcd_audit.csv");
  r.rows["firm_years"] = measures.size();
  std::size_t neg = 0, crash = 0;
  for (const auto& m : measures) {
    neg += m.negoutlier.value_or(0);
    crash += m.crash.value_or(0);
  }
  r.rows["negoutlier_ones"] = neg;
  r.rows["crash_ones"] = crash;
  record(r);
  return r;
}

StageReport Pipeline::sentiment() {
  const auto t0 = Clock::now();
  require_file(artifact("fundamentals_clean.csv"), "sentiment");
  const auto fundamentals = parse_fundamentals(csv::read_text(artifact("fundamentals_clean.csv")));
  const auto series = sentiment::build_sentiment(fundamentals.records, config_.sentiment);
  csv::write_atomic(artifact("sentiment.csv"), sentiment::serialize_sentiment(series));
  csv::write_atomic(artifact("sentiment_pca.csv"), sentiment::serialize_pca(series));
  StageReport r{"sentiment", seconds_since(t0), {}, {"sentiment.csv", "sentiment_pca.csv"}};
  r.rows["firm_years"] = series.rows.size();
  record(r);
  return r;
}

StageReport Pipeline::regress() {
  const auto t0 = Clock::now();
  for (const char* name : {"crash_measures.csv", "sentiment.csv", "fundamentals_clean.csv"})
    require_file(artifact(name), "regress");
  const auto measures = parse_measures(csv::read_text(artifact("crash_measures.csv")));
  const auto sent = sentiment::parse_sentiment(csv::read_text(artifact("sentiment.csv")));
  const auto fundamentals = parse_fundamentals(csv::read_text(artifact("fundamentals_clean.csv")));
  const auto panel = econ::assemble_model_panel(measures, sent, fundamentals.records);

  econ::PaperModelsConfig rc = config_.regressions;
  rc.threads = config_.threads;
  const auto outcomes = econ::run_paper_models(panel, rc);

  csv::write_atomic(artifact("regression_results.csv"), econ::serialize_results(outcomes));

  std::vector<econ::ModelOutcome> t3, t5, t6;
  for (const auto& o : outcomes) {
    if (o.name.rfind("table3", 0) == 0) t3.push_back(o);
    if (o.name.rfind("table5", 0) == 0) t5.push_back(o);
    if (o.name.rfind("table6", 0) == 0) t6.push_back(o);
  }
  std::string text;
  if (!t3.empty()) text += econ::format_results_table(t3, "Main models (pooled, industry and year fixed effects)") + "\n";
  if (!t5.empty()) text += econ::format_results_table(t5, "Arellano-Bond difference GMM by size quartile (q4 = largest)") + "\n";
  if (!t6.empty()) text += econ::format_results_table(t6, "Detoned sentiment, NEGOUTLIER logit") + "\n";
  csv::write_atomic(artifact("regression_tables.txt"), text);

  csv::Writer forest({"model", "term", "coefficient", "ci_lower", "ci_upper"});
  for (const auto& o : outcomes) {
    if (!o.result) continue;
    const auto& res = *o.result;
    for (std::size_t j = 0; j < res.names.size(); ++j) {
      const auto& t = res.names[j];
      if (t == "const" || t.rfind("industry=", 0) == 0 || t.rfind("year=", 0) == 0) continue;
      const auto jj = static_cast<Eigen::Index>(j);
      const double b = res.coefficients(jj), se = res.standard_errors(jj);
      forest.row({o.name, t, csv::format_number(b), csv::format_number(b - 1.959963984540054 * se),
                  csv::format_number(b + 1.959963984540054 * se)});
    }
  }
  csv::write_atomic(artifact("plot_coefficients.csv"), forest.str());

  StageReport r{"regress", seconds_since(t0), {}, {"regression_results.csv", "regression_tables.txt", "plot_coefficients.csv"}};
  r.rows["panel_rows"] = panel.size();
  std::size_t ok = 0;
  for (const auto& o : outcomes) ok += o.result.has_value();
  r.rows["models_estimated"] = ok;
  r.rows["models_failed"] = outcomes.size() - ok;
  record(r);
  return r;
}

std::vector<StageReport> Pipeline::run_all() {
  return {ingest(), residuals(), measures(), sentiment(), regress()};
}

}  // namespace crashrisk
