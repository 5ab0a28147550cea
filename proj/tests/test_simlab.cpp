#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crashrisk/error.hpp"
#include "crashrisk/mcd.hpp"
#include "crashrisk/simlab.hpp"
#include "doctest.h"

using namespace crashrisk;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("crashrisk_simlab_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

simlab::SimConfig small() {
  simlab::SimConfig c;
  c.n_firms = 20;
  c.n_years = 3;
  return c;
}

}  // namespace

TEST_CASE("no crashes when crash_prob = 0") {
  auto c = small();
  c.crash_prob = 0.0;
  const auto dir = scratch("zero");
  const auto paths = simlab::gen_panel(c, dir);
  CHECK(slurp(paths.ground_truth) == "firm_id,year,injected_week,magnitude\n");
  CHECK(simlab::generate(c).crashes.empty());
}

TEST_CASE("exactly one crash per firm-year when crash_prob = 1") {
  auto c = small();
  c.crash_prob = 1.0;
  c.crash_magnitude = 10.0;
  const auto data = simlab::generate(c);
  std::map<std::pair<std::string, int>, int> count;
  for (const auto& k : data.crashes) ++count[{k.firm_id, k.year}];
  CHECK(count.size() == c.n_firms * static_cast<std::size_t>(c.n_years));
  for (const auto& [key, n] : count) CHECK(n == 1);

  // The crash week carries exactly -magnitude * sigma as its shock.
  std::set<std::pair<std::string, std::int64_t>> crash_weeks;
  for (const auto& k : data.crashes) {
    crash_weeks.insert({k.firm_id, k.week.serial()});
    CHECK(k.week.calendar_year() == k.year);
  }
  CHECK(crash_weeks.size() == data.crashes.size());
}

TEST_CASE("same seed gives byte-identical files, different seed does not") {
  auto c = small();
  const auto a = simlab::gen_panel(c, scratch("a"));
  const auto b = simlab::gen_panel(c, scratch("b"));
  CHECK(slurp(a.returns) == slurp(b.returns));
  CHECK(slurp(a.fundamentals) == slurp(b.fundamentals));
  CHECK(slurp(a.ground_truth) == slurp(b.ground_truth));
  c.seed = 2;
  const auto d = simlab::gen_panel(c, scratch("d"));
  CHECK(slurp(a.returns) != slurp(d.returns));
}

TEST_CASE("generated files load back through data_panel") {
  auto c = small();
  const auto paths = simlab::gen_panel(c, scratch("load"));
  const auto data = simlab::generate(c);
  CHECK(data.returns.size() == c.n_firms * static_cast<std::size_t>(c.n_years * c.weeks_per_year));
  CHECK(data.fundamentals.size() == c.n_firms * static_cast<std::size_t>(c.n_years));
  CHECK(fs::file_size(paths.returns) > 0);
}

TEST_CASE("config invariants") {
  auto c = small();
  c.weeks_per_year = 3;
  CHECK_THROWS_AS(simlab::validate(c), ConfigError);
  c = small();
  c.crash_prob = 1.5;
  CHECK_THROWS_AS(simlab::generate(c), ConfigError);
  c.crash_prob = -0.1;
  CHECK_THROWS_AS(simlab::validate(c), ConfigError);
  c = small();
  c.weeks_per_year = 5;
  CHECK_NOTHROW(simlab::validate(c));
}

TEST_CASE("chi-square table values and round trips") {
  // Standard table entries.
  CHECK(std::abs(simlab::chi2_quantile(1, 0.975) - 5.02389) < 1e-4);
  CHECK(std::abs(simlab::chi2_quantile(1, 0.95) - 3.84146) < 1e-4);
  CHECK(std::abs(simlab::chi2_quantile(2, 0.975) - 7.37776) < 1e-4);
  CHECK(std::abs(simlab::chi2_quantile(3, 0.99) - 11.3449) < 1e-4);
  CHECK(std::abs(simlab::chi2_quantile(10, 0.05) - 3.94030) < 1e-4);
  CHECK(std::abs(simlab::chi2_cdf(3.84146, 1) - 0.95) < 1e-5);
  CHECK(std::abs(simlab::chi2_cdf(2.0, 2) - (1.0 - std::exp(-1.0))) < 1e-10);
  for (double k : {1.0, 2.0, 3.0, 5.0, 10.0, 30.0}) {
    CHECK(simlab::chi2_cdf(0.0, k) == 0.0);
    for (double q : {0.001, 0.1, 0.5, 0.9, 0.975, 0.999}) {
      CHECK(std::abs(simlab::chi2_cdf(simlab::chi2_quantile(k, q), k) - q) < 1e-8);
    }
  }
  CHECK_THROWS_AS(simlab::chi2_quantile(0, 0.5), std::domain_error);
  CHECK_THROWS_AS(simlab::chi2_quantile(1, 1.0), std::domain_error);
  CHECK_THROWS_AS(simlab::chi2_cdf(1.0, -1), std::domain_error);
}

TEST_CASE("brute-force MCD") {
  std::vector<std::vector<double>> d;
  for (double v : {1, 2, 3, 4, 5, 6, 7, 8, 9, 1000}) d.push_back({v});
  const auto bf = simlab::mcd_bruteforce(d);
  CHECK(bf.support == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  // h = 6; six consecutive integers have divisor-6 variance 35/12.
  CHECK(bf.determinant == doctest::Approx(35.0 / 12.0).epsilon(1e-12));

  Eigen::MatrixXd m(10, 1);
  for (int i = 0; i < 10; ++i) m(i, 0) = d[static_cast<std::size_t>(i)][0];
  const auto exact = mcd::mcd_exact(m);
  CHECK(exact.support == bf.support);

  // n = p + 1: h = n, the only subset is everything.
  std::vector<std::vector<double>> tri = {{0, 0}, {1, 0}, {0, 2}};
  const auto t = simlab::mcd_bruteforce(tri);
  CHECK(t.support == std::vector<std::size_t>{0, 1, 2});

  std::vector<std::vector<double>> big;
  for (int i = 0; i < 50; ++i) big.push_back({static_cast<double>(i)});
  CHECK_THROWS_AS(simlab::mcd_bruteforce(big), std::length_error);
}

TEST_CASE("Gaussian-elimination determinant") {
  CHECK(simlab::determinant({{2, 0}, {0, 3}}) == doctest::Approx(6.0));
  CHECK(simlab::determinant({{0, 1}, {1, 0}}) == doctest::Approx(-1.0));
  CHECK(simlab::determinant({{1, 2}, {2, 4}}) == 0.0);
  CHECK(simlab::determinant({{4, 1, 2}, {1, 3, 0}, {2, 0, 5}}) == doctest::Approx(4 * 15 - 1 * 5 + 2 * (-6)));
}

TEST_CASE("dynamic panel shape") {
  simlab::DynamicPanelConfig c;
  c.n_firms = 10;
  c.n_periods = 6;
  const auto rows = simlab::gen_dynamic_panel(c);
  REQUIRE(rows.size() == 60);
  CHECK(rows[0].firm_id == rows[5].firm_id);
  CHECK(rows[1].year == rows[0].year + 1);
  CHECK(std::isfinite(rows[0].get("y")));
  CHECK(std::isfinite(rows[0].get("x")));
  const auto again = simlab::gen_dynamic_panel(c);
  CHECK(again[17].get("y") == rows[17].get("y"));
}
