#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "crashrisk/data_panel.hpp"
#include "crashrisk/econometrics.hpp"

namespace crashrisk::simlab {

struct SimConfig {
  std::size_t n_firms = 200;
  int n_years = 6;
  int start_year = 2010;
  int weeks_per_year = 52;
  double base_sigma = 0.03;        // weekly idiosyncratic volatility
  double crash_prob = 0.1;         // per firm-year
  double crash_magnitude = 6.0;    // in units of base_sigma
  double sentiment_effect = 0.0;   // log-odds per unit of SENT_{t-1}
  int n_industries = 5;
  std::uint64_t seed = 1;
};

// Throws ConfigError on invariant violations.
void validate(const SimConfig& config);

struct InjectedCrash {
  std::string firm_id;
  int year = 0;
  IsoWeek week;
  double magnitude = 0.0;
};

struct SimData {
  std::vector<FirmWeekRecord> returns;
  std::vector<FundamentalsRow> fundamentals;
  std::vector<InjectedCrash> crashes;
};

// Deterministic in `seed`; firms are generated from per-firm derived seeds.
SimData generate(const SimConfig& config);

struct SimPaths {
  std::filesystem::path returns;
  std::filesystem::path fundamentals;
  std::filesystem::path ground_truth;
};

// Writes returns.csv, fundamentals.csv and ground_truth.csv into `dir`.
SimPaths gen_panel(const SimConfig& config, const std::filesystem::path& dir);

std::string serialize_ground_truth(const std::vector<InjectedCrash>& crashes);

// ---- Independent oracles (no numerical code shared with the library) ----

struct BruteForceMcd {
  std::vector<std::size_t> support;  // ascending
  double determinant = 0.0;          // of the divisor-h covariance
};

// Exhaustive MCD over all h-subsets of the rows of `data` (n x p). Ties
// within 1e-10 relative keep the lexicographically first subset. Throws
// std::length_error if C(n, h) exceeds `budget`.
BruteForceMcd mcd_bruteforce(const std::vector<std::vector<double>>& data, std::uint64_t budget = 2'000'000);

// Determinant by Gaussian elimination with partial pivoting.
double determinant(std::vector<std::vector<double>> a);

// Regularized lower incomplete gamma via series / continued fraction.
double chi2_cdf(double x, double dof);
// Inverse of chi2_cdf by bracketing + bisection/Newton.
double chi2_quantile(double dof, double q);

// ---- Dynamic panel DGP for difference GMM ----

struct DynamicPanelConfig {
  std::size_t n_firms = 500;
  int n_periods = 8;
  double rho = 0.5;
  double beta_x = 0.0;
  double firm_effect_sd = 1.0;
  double noise_sd = 1.0;
  int burn_in = 50;
  std::uint64_t seed = 1;
};

// y_it = rho y_i,t-1 + beta_x x_it + eta_i + eps_it; fields "y" and "x".
std::vector<econ::PanelRow> gen_dynamic_panel(const DynamicPanelConfig& config);

}  // namespace crashrisk::simlab
