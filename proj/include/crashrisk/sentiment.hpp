#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashrisk/data_panel.hpp"

namespace crashrisk::sentiment {

inline constexpr std::size_t kInputs = 7;
inline constexpr std::array<std::string_view, kInputs> kInputNames = {"P/E", "TURN", "EQS", "CEFD",
                                                                      "TOBIN", "LEV", "BSI"};
// Published index weights for (P/E, TURN, EQS, CEFD, TOBIN, LEV, BSI).
inline constexpr std::array<double, kInputs> kPaperWeights = {-0.136, 0.208, 0.052, -0.216, 0.006, 0.17, 0.048};

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const;
};

struct Standardized {
  Eigen::MatrixXd data;  // N x k, columns mean 0 / stdev 1
  Standardizer standardizer;
};

// Column-wise z-scores (n-1 divisor). A constant column throws
// DegenerateDataError naming the variable.
Standardized standardize(const Eigen::MatrixXd& raw,
                         std::span<const std::string_view> names = std::span<const std::string_view>(kInputNames));

struct PcaResult {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns, largest-|entry| positive
  Eigen::MatrixXd scores;        // N x k projections
  Eigen::MatrixXd covariance;
};

// Eigen-decomposition of the sample covariance; needs N >= 8.
PcaResult pca(const Eigen::MatrixXd& standardized);

enum class LoadingMode { FixedPaper, Fitted };
std::string_view to_string(LoadingMode mode);
LoadingMode parse_loading_mode(std::string_view text);

struct SentimentLoadings {
  Eigen::VectorXd weights;
  LoadingMode mode = LoadingMode::FixedPaper;
  Eigen::VectorXd explained_variance;  // eigenvalue shares (fitted mode)
};

SentimentLoadings fixed_paper_loadings();
// Eigenvalue-share-weighted average of the eigenvectors.
SentimentLoadings fitted_loadings(const PcaResult& fit);

// weights' x; nullopt if any input is missing (NaN).
std::optional<double> build_sent(const Eigen::VectorXd& inputs, const SentimentLoadings& loadings);

// Standardized inputs rebuilt from components 2..k only.
Eigen::MatrixXd remove_first_component(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& eigenvectors);

// SENT computed on the first-component-free reconstruction.
Eigen::VectorXd detone(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& eigenvectors,
                       const SentimentLoadings& loadings);

// Clamp to the [lower, upper] empirical quantiles (NaN entries untouched).
Eigen::VectorXd winsorize(const Eigen::VectorXd& values, double lower, double upper);

struct SentimentOptions {
  LoadingMode mode = LoadingMode::FixedPaper;
  bool detone = true;
  std::optional<std::pair<double, double>> winsorize;  // off by default
};

struct SentimentRow {
  std::string firm_id;
  int year = 0;
  std::optional<double> sent;
  std::optional<double> sent_detoned;
  std::string reason;
};

struct SentimentSeries {
  std::vector<SentimentRow> rows;  // sorted by (firm, year)
  SentimentLoadings loadings;
  PcaResult pca;
  Standardizer standardizer;
};

SentimentSeries build_sentiment(const std::vector<FundamentalsRow>& fundamentals, const SentimentOptions& options = {});

std::string serialize_sentiment(const SentimentSeries& series);
std::string serialize_pca(const SentimentSeries& series);
std::vector<SentimentRow> parse_sentiment(std::string_view text);

}  // namespace crashrisk::sentiment
