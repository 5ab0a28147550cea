#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "crashrisk/common/csv.hpp"
#include "crashrisk/common/parallel.hpp"
#include "crashrisk/common/rng.hpp"
#include "crashrisk/distributions.hpp"
#include "crashrisk/error.hpp"
#include "doctest.h"

using namespace crashrisk;

TEST_CASE("rng streams are reproducible and seed-sensitive") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    (void)c.next();
  }
  Rng d(42), e(43);
  CHECK(d.next() != e.next());
}

TEST_CASE("rng uniform and below stay in range") {
  Rng r(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(13) < 13u);
  }
}

TEST_CASE("rng normal has unit moments") {
  Rng r(11);
  const int n = 200000;
  double s = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.01);
}

TEST_CASE("sample without replacement yields distinct indices") {
  Rng r(3);
  for (int rep = 0; rep < 50; ++rep) {
    const auto idx = r.sample_without_replacement(20, 7);
    CHECK(idx.size() == 7);
    std::set<std::size_t> uniq(idx.begin(), idx.end());
    CHECK(uniq.size() == 7);
    CHECK(*uniq.rbegin() < 20u);
  }
}

TEST_CASE("derived seeds depend on firm and year") {
  CHECK(derive_seed(1, "F1", 2010) == derive_seed(1, "F1", 2010));
  CHECK(derive_seed(1, "F1", 2010) != derive_seed(1, "F1", 2011));
  CHECK(derive_seed(1, "F1", 2010) != derive_seed(1, "F2", 2010));
  CHECK(derive_seed(1, "F1", 2010) != derive_seed(2, "F1", 2010));
  // Known FNV-1a vector.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("csv split handles quotes") {
  const auto f = csv::split_line(R"(a,"b,c","d""e",)");
  REQUIRE(f.size() == 4);
  CHECK(f[0] == "a");
  CHECK(f[1] == "b,c");
  CHECK(f[2] == "d\"e");
  CHECK(f[3] == "");
}

TEST_CASE("csv parse strips BOM and CR") {
  const auto t = csv::parse("\xEF\xBB\xBFx,y\r\n1,2\r\n\r\n3,4\n");
  REQUIRE(t.header.size() == 2);
  CHECK(t.header[0] == "x");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[1][1] == "4");
  CHECK(t.line_numbers[1] == 4);
  CHECK(t.column("y") == 1);
  CHECK_FALSE(t.column("z").has_value());
}

TEST_CASE("number formatting round-trips") {
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double v = (r.uniform() - 0.5) * std::pow(10.0, static_cast<double>(r.below(20)) - 10.0);
    const auto s = csv::format_number(v);
    REQUIRE(csv::parse_number(s).has_value());
    CHECK(*csv::parse_number(s) == v);
  }
  CHECK(csv::format_number(0.0) == "0");
  CHECK(csv::format_number(-0.0) == "0");
  CHECK(csv::format_number(std::nan("")) == "");
  CHECK_FALSE(csv::parse_number("abc").has_value());
  CHECK_FALSE(csv::parse_number("inf").has_value());
  CHECK_FALSE(csv::parse_number("1.5x").has_value());
  CHECK(csv::parse_integer("2014") == 2014);
  CHECK_FALSE(csv::parse_integer("20.5").has_value());
}

TEST_CASE("atomic write leaves no temp file") {
  const auto dir = std::filesystem::temp_directory_path() / "crashrisk_test_common";
  std::filesystem::remove_all(dir);
  const auto path = dir / "sub" / "file.csv";
  csv::write_atomic(path, "a\n1\n");
  CHECK(csv::read_text(path) == "a\n1\n");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  CHECK_THROWS_AS(csv::read_text(dir / "missing.csv"), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("parallel_for covers every index once and rethrows the lowest failure") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));

  try {
    parallel_for(100, 4, [](std::size_t i) {
      if (i == 17 || i == 60) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "17");
  }
}

TEST_CASE("distribution wrappers") {
  CHECK(dist::chi2_quantile(1, 0.975) == doctest::Approx(5.023886).epsilon(1e-6));
  CHECK(dist::chi2_cdf(5.023886187314888, 1) == doctest::Approx(0.975).epsilon(1e-10));
  CHECK(dist::normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(dist::student_t_two_sided_p(2.228138851986274, 10) == doctest::Approx(0.05).epsilon(1e-8));
  CHECK_THROWS(dist::chi2_quantile(1, 1.0));
  CHECK_THROWS(dist::chi2_quantile(1, 0.0));
}
