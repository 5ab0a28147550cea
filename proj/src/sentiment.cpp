#include "crashrisk/sentiment.hpp"

#include <algorithm>
#include <cmath>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/error.hpp"

namespace crashrisk::sentiment {

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& raw) const {
  Eigen::MatrixXd z = raw.rowwise() - mean.transpose();
  return z.array().rowwise() / sd.transpose().array();
}

Standardized standardize(const Eigen::MatrixXd& raw, std::span<const std::string_view> names) {
  const auto n = raw.rows();
  const auto k = raw.cols();
  if (n < 2) throw InsufficientDataError("standardize needs at least 2 rows");
  Standardized out;
  out.standardizer.mean = raw.colwise().mean().transpose();
  out.standardizer.sd.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::ArrayXd c = raw.col(j).array() - out.standardizer.mean(j);
    const double sd = std::sqrt(c.square().sum() / static_cast<double>(n - 1));
    const bool constant = (raw.col(j).array() == raw(0, j)).all();
    if (constant || !(sd > 0.0)) {
      const std::string name = j < static_cast<Eigen::Index>(names.size()) ? std::string(names[static_cast<std::size_t>(j)])
                                                                           : "column " + std::to_string(j);
      throw DegenerateDataError("constant input column: " + name);
    }
    out.standardizer.sd(j) = sd;
  }
  out.data = out.standardizer.apply(raw);
  return out;
}

PcaResult pca(const Eigen::MatrixXd& standardized) {
  const auto n = standardized.rows();
  const auto k = standardized.cols();
  if (n < 8) throw InsufficientDataError("PCA needs at least 8 observations");
  const Eigen::MatrixXd centered = standardized.rowwise() - standardized.colwise().mean();
  PcaResult out;
  out.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  if (!out.covariance.allFinite()) throw NumericError("PCA covariance is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(out.covariance);
  if (solver.info() != Eigen::Success) throw NumericError("PCA eigen-solver failed to converge");
  // Eigen returns ascending order.
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < k; ++j) {
    // Clamp round-off negatives of a PSD matrix.
    if (out.eigenvalues(j) < 0.0 && out.eigenvalues(j) > -1e-12 * std::max(1.0, out.eigenvalues(0)))
      out.eigenvalues(j) = 0.0;
    Eigen::Index arg = 0;
    out.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
    if (out.eigenvectors(arg, j) < 0.0) out.eigenvectors.col(j) *= -1.0;
  }
  out.scores = standardized * out.eigenvectors;
  return out;
}

std::string_view to_string(LoadingMode mode) { return mode == LoadingMode::FixedPaper ? "fixed_paper" : "fitted"; }

LoadingMode parse_loading_mode(std::string_view text) {
  if (text == "fixed_paper") return LoadingMode::FixedPaper;
  if (text == "fitted") return LoadingMode::Fitted;
  throw ConfigError("unknown sentiment mode '" + std::string(text) + "' (fixed_paper | fitted)");
}

SentimentLoadings fixed_paper_loadings() {
  SentimentLoadings l;
  l.mode = LoadingMode::FixedPaper;
  l.weights = Eigen::Map<const Eigen::VectorXd>(kPaperWeights.data(), kInputs);
  return l;
}

SentimentLoadings fitted_loadings(const PcaResult& fit) {
  SentimentLoadings l;
  l.mode = LoadingMode::Fitted;
  const double total = fit.eigenvalues.sum();
  l.explained_variance = fit.eigenvalues / total;
  l.weights = fit.eigenvectors * l.explained_variance;
  return l;
}

std::optional<double> build_sent(const Eigen::VectorXd& inputs, const SentimentLoadings& loadings) {
  if (!inputs.allFinite()) return std::nullopt;
  return loadings.weights.dot(inputs);
}

Eigen::MatrixXd remove_first_component(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& eigenvectors) {
  const auto k = eigenvectors.cols();
  return scores.rightCols(k - 1) * eigenvectors.rightCols(k - 1).transpose();
}

Eigen::VectorXd detone(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& eigenvectors,
                       const SentimentLoadings& loadings) {
  return remove_first_component(scores, eigenvectors) * loadings.weights;
}

Eigen::VectorXd winsorize(const Eigen::VectorXd& values, double lower, double upper) {
  if (!(lower >= 0.0 && lower < upper && upper <= 1.0)) throw ConfigError("winsorize quantiles must satisfy 0 <= lower < upper <= 1");
  std::vector<double> finite;
  for (double v : values)
    if (std::isfinite(v)) finite.push_back(v);
  if (finite.empty()) return values;
  std::sort(finite.begin(), finite.end());
  auto quantile = [&](double q) {
    // Linear interpolation between order statistics.
    const double pos = q * static_cast<double>(finite.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, finite.size() - 1);
    return finite[lo] + (pos - static_cast<double>(lo)) * (finite[hi] - finite[lo]);
  };
  const double lo = quantile(lower), hi = quantile(upper);
  Eigen::VectorXd out = values;
  for (auto& v : out)
    if (std::isfinite(v)) v = std::clamp(v, lo, hi);
  return out;
}

namespace {

Eigen::VectorXd inputs_of(const FundamentalsRow& f) {
  Eigen::VectorXd x(kInputs);
  x << f.pe, f.turn, f.eqs, f.cefd, f.tobin, f.lev, f.bsi;
  return x;
}

}  // namespace

SentimentSeries build_sentiment(const std::vector<FundamentalsRow>& fundamentals, const SentimentOptions& options) {
  std::vector<const FundamentalsRow*> sorted;
  for (const auto& f : fundamentals) sorted.push_back(&f);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) {
    return std::tie(a->firm_id, a->fiscal_year) < std::tie(b->firm_id, b->fiscal_year);
  });

  std::vector<std::size_t> complete;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (inputs_of(*sorted[i]).allFinite()) complete.push_back(i);

  Eigen::MatrixXd raw(static_cast<Eigen::Index>(complete.size()), static_cast<Eigen::Index>(kInputs));
  for (std::size_t r = 0; r < complete.size(); ++r) raw.row(static_cast<Eigen::Index>(r)) = inputs_of(*sorted[complete[r]]).transpose();

  SentimentSeries series;
  const Standardized z = standardize(raw);
  series.standardizer = z.standardizer;
  series.pca = pca(z.data);
  series.loadings = options.mode == LoadingMode::FixedPaper ? fixed_paper_loadings() : fitted_loadings(series.pca);
  if (options.mode == LoadingMode::FixedPaper)
    series.loadings.explained_variance = series.pca.eigenvalues / series.pca.eigenvalues.sum();

  Eigen::VectorXd sent = z.data * series.loadings.weights;
  Eigen::VectorXd toned = detone(series.pca.scores, series.pca.eigenvectors, series.loadings);
  if (options.winsorize) {
    sent = winsorize(sent, options.winsorize->first, options.winsorize->second);
    toned = winsorize(toned, options.winsorize->first, options.winsorize->second);
  }

  series.rows.resize(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    series.rows[i].firm_id = sorted[i]->firm_id;
    series.rows[i].year = sorted[i]->fiscal_year;
    series.rows[i].reason = "missing sentiment input";
  }
  for (std::size_t r = 0; r < complete.size(); ++r) {
    auto& row = series.rows[complete[r]];
    row.sent = sent(static_cast<Eigen::Index>(r));
    if (options.detone) row.sent_detoned = toned(static_cast<Eigen::Index>(r));
    row.reason.clear();
  }
  return series;
}

std::string serialize_sentiment(const SentimentSeries& series) {
  csv::Writer w({"firm_id", "year", "sent", "sent_detoned", "mode", "reason"});
  const std::string mode(to_string(series.loadings.mode));
  for (const auto& r : series.rows) {
    w.row({r.firm_id, std::to_string(r.year), r.sent ? csv::format_number(*r.sent) : "",
           r.sent_detoned ? csv::format_number(*r.sent_detoned) : "", mode, r.reason});
  }
  return w.str();
}

std::string serialize_pca(const SentimentSeries& series) {
  std::vector<std::string> header = {"component", "eigenvalue", "share", "index_weight_variable", "index_weight"};
  for (auto name : kInputNames) header.emplace_back("loading_" + std::string(name));
  csv::Writer w(header);
  const auto& p = series.pca;
  const double total = p.eigenvalues.sum();
  for (Eigen::Index j = 0; j < p.eigenvalues.size(); ++j) {
    std::vector<std::string> row = {std::to_string(j + 1), csv::format_number(p.eigenvalues(j)),
                                    csv::format_number(p.eigenvalues(j) / total),
                                    std::string(kInputNames[static_cast<std::size_t>(j)]),
                                    csv::format_number(series.loadings.weights(j))};
    for (Eigen::Index v = 0; v < p.eigenvectors.rows(); ++v) row.push_back(csv::format_number(p.eigenvectors(v, j)));
    w.row(std::move(row));
  }
  return w.str();
}

std::vector<SentimentRow> parse_sentiment(std::string_view text) {
  const csv::Table table = csv::parse(text);
  auto col = [&](const char* name) {
    auto c = table.column(name);
    if (!c) throw SchemaError(std::string("sentiment table: missing column ") + name);
    return *c;
  };
  const std::size_t cf = col("firm_id"), cy = col("year"), cs = col("sent"), cd = col("sent_detoned"),
                    cr = col("reason");
  std::vector<SentimentRow> out;
  for (const auto& row : table.rows) {
    if (row.size() < table.header.size()) throw DataError("sentiment table: short row");
    SentimentRow r;
    r.firm_id = row[cf];
    r.year = static_cast<int>(csv::parse_integer(row[cy]).value_or(0));
    r.sent = csv::parse_number(row[cs]);
    r.sent_detoned = csv::parse_number(row[cd]);
    r.reason = row[cr];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace crashrisk::sentiment
