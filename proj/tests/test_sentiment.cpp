#include <cmath>

#include "crashrisk/common/rng.hpp"
#include "crashrisk/error.hpp"
#include "crashrisk/sentiment.hpp"
#include "crashrisk/simlab.hpp"
#include "doctest.h"

using namespace crashrisk;
using namespace crashrisk::sentiment;

namespace {

Eigen::MatrixXd random_inputs(Rng& rng, Eigen::Index n) {
  // Correlated columns through a shared factor.
  Eigen::MatrixXd m(n, 7);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = rng.normal();
    for (Eigen::Index j = 0; j < 7; ++j) m(i, j) = 0.3 * (j + 1) * f + rng.normal() * (1.0 + 0.2 * j) + j;
  }
  return m;
}

double sample_cov(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double n = static_cast<double>(a.size());
  return ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / (n - 1.0);
}

double sample_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return sample_cov(a, b) / std::sqrt(sample_cov(a, a) * sample_cov(b, b));
}

// Removes the mean and the projections on `against` from v.
Eigen::VectorXd orthogonalize(Eigen::VectorXd v, const std::vector<Eigen::VectorXd>& against) {
  v.array() -= v.mean();
  for (const auto& u : against) v -= (v.dot(u) / u.dot(u)) * u;
  return v;
}

}  // namespace

TEST_CASE("standardize") {
  Eigen::MatrixXd c(3, 1);
  c << 1, 2, 3;
  const std::string_view x_name[] = {"X"};
  const auto z = standardize(c, x_name);
  CHECK(z.data(0, 0) == doctest::Approx(-1.0));
  CHECK(std::abs(z.data(1, 0)) < 1e-15);
  CHECK(z.data(2, 0) == doctest::Approx(1.0));

  Rng rng(1);
  const auto s = standardize(random_inputs(rng, 200));
  for (Eigen::Index j = 0; j < 7; ++j) {
    CHECK(std::abs(s.data.col(j).mean()) < 1e-10);
    CHECK(std::abs(std::sqrt(sample_cov(s.data.col(j), s.data.col(j))) - 1.0) < 1e-10);
    CHECK(s.standardizer.sd(j) > 0.0);
  }
  const auto again = standardize(s.data);
  CHECK((again.data - s.data).cwiseAbs().maxCoeff() < 1e-10);

  Eigen::MatrixXd lev = random_inputs(rng, 50);
  lev.col(5).setConstant(0.4);
  try {
    standardize(lev);
    FAIL("expected DegenerateDataError");
  } catch (const DegenerateDataError& e) {
    CHECK(std::string(e.what()).find("LEV") != std::string::npos);
  }
}

TEST_CASE("pca invariants") {
  Rng rng(2);
  for (int rep = 0; rep < 10; ++rep) {
    const auto z = standardize(random_inputs(rng, 300)).data;
    const auto p = pca(z);
    CHECK(std::abs(p.eigenvalues.sum() - 7.0) < 1e-8);
    for (Eigen::Index j = 1; j < 7; ++j) CHECK(p.eigenvalues(j) <= p.eigenvalues(j - 1));
    CHECK((p.eigenvectors.transpose() * p.eigenvectors - Eigen::MatrixXd::Identity(7, 7)).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd rebuilt = p.eigenvectors * p.eigenvalues.asDiagonal() * p.eigenvectors.transpose();
    CHECK((rebuilt - p.covariance).cwiseAbs().maxCoeff() < 1e-8);
    for (Eigen::Index j = 0; j < 7; ++j) {
      Eigen::Index arg = 0;
      p.eigenvectors.col(j).cwiseAbs().maxCoeff(&arg);
      CHECK(p.eigenvectors(arg, j) > 0.0);
    }
    // Projecting and reconstructing with all components is lossless.
    CHECK((p.scores * p.eigenvectors.transpose() - z).cwiseAbs().maxCoeff() < 1e-8);
  }
  CHECK_THROWS_AS(pca(Eigen::MatrixXd::Random(7, 7)), InsufficientDataError);
}

TEST_CASE("pca on rank-one data") {
  Rng rng(3);
  Eigen::MatrixXd m(40, 7);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double f = rng.normal();
    for (Eigen::Index j = 0; j < 7; ++j) m(i, j) = (j % 2 ? -1.0 : 1.0) * (j + 1) * f + j;
  }
  const auto z = standardize(m).data;
  const auto p = pca(z);
  CHECK(p.eigenvalues(0) > 0.0);
  for (Eigen::Index j = 1; j < 7; ++j) CHECK(std::abs(p.eigenvalues(j)) < 1e-10);
  const auto toned = detone(p.scores, p.eigenvectors, fixed_paper_loadings());
  CHECK(toned.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("pca on independent columns has unit eigenvalues") {
  Rng rng(4);
  Eigen::MatrixXd m(10000, 7);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < 7; ++j) m(i, j) = rng.normal();
  const auto p = pca(standardize(m).data);
  for (Eigen::Index j = 0; j < 7; ++j) CHECK(std::abs(p.eigenvalues(j) - 1.0) < 0.1);
}

TEST_CASE("fixed paper loadings reproduce the published weights") {
  const auto l = fixed_paper_loadings();
  const double expected[] = {-0.136, 0.208, 0.052, -0.216, 0.006, 0.17, 0.048};
  for (Eigen::Index j = 0; j < 7; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(7);
    e(j) = 1.0;
    CHECK(*build_sent(e, l) == expected[j]);
  }
  CHECK(*build_sent(Eigen::VectorXd::Zero(7), l) == 0.0);
  Eigen::VectorXd missing = Eigen::VectorXd::Ones(7);
  missing(2) = std::nan("");
  CHECK_FALSE(build_sent(missing, l).has_value());

  Rng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd x(7), y(7);
    for (Eigen::Index j = 0; j < 7; ++j) {
      x(j) = rng.normal();
      y(j) = rng.normal();
    }
    const double a = rng.normal(), b = rng.normal();
    CHECK(std::abs(*build_sent(a * x + b * y, l) - (a * *build_sent(x, l) + b * *build_sent(y, l))) < 1e-12);
  }
}

TEST_CASE("fitted loadings are the eigenvalue-share average of eigenvectors") {
  Rng rng(6);
  const auto p = pca(standardize(random_inputs(rng, 400)).data);
  const auto l = fitted_loadings(p);
  CHECK(std::abs(l.explained_variance.sum() - 1.0) < 1e-12);
  Eigen::VectorXd manual = Eigen::VectorXd::Zero(7);
  for (Eigen::Index j = 0; j < 7; ++j) manual += p.eigenvectors.col(j) * (p.eigenvalues(j) / p.eigenvalues.sum());
  CHECK((manual - l.weights).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("detoned series is orthogonal to the first component and idempotent") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto z = standardize(random_inputs(rng, 250)).data;
    const auto p = pca(z);
    for (const auto& l : {fixed_paper_loadings(), fitted_loadings(p)}) {
      const Eigen::VectorXd toned = detone(p.scores, p.eigenvectors, l);
      CHECK(std::abs(sample_cov(toned, p.scores.col(0))) < 1e-10);
      CHECK(std::abs(sample_corr(toned, p.scores.col(0))) < 1e-8);

      const Eigen::MatrixXd once = remove_first_component(p.scores, p.eigenvectors);
      const Eigen::VectorXd twice = detone(once * p.eigenvectors, p.eigenvectors, l);
      CHECK((twice - toned).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("detoning a two-component construction leaves the second component") {
  Rng rng(8);
  const Eigen::Index n = 500;
  Eigen::VectorXd a(n), b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i) = 3.0 * rng.normal();
    b(i) = rng.normal();
  }
  a = orthogonalize(a, {});
  b = orthogonalize(b, {a});
  Eigen::VectorXd u1(7), u2(7);
  u1 << 1, 2, 0, -1, 1, 0, 1;
  u2 << 0, 1, 1, 2, 0, -1, -1;
  u2 -= (u2.dot(u1) / u1.dot(u1)) * u1;
  u1.normalize();
  u2.normalize();
  const Eigen::MatrixXd data = a * u1.transpose() + b * u2.transpose();
  const auto p = pca(data);
  const auto l = fixed_paper_loadings();
  const Eigen::VectorXd expected = b * u2.dot(l.weights);
  CHECK((detone(p.scores, p.eigenvectors, l) - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("build_sentiment on a simulated panel") {
  simlab::SimConfig cfg;
  cfg.n_firms = 80;
  cfg.n_years = 4;
  auto data = simlab::generate(cfg);
  data.fundamentals[5].lev = std::nan("");
  for (auto mode : {LoadingMode::FixedPaper, LoadingMode::Fitted}) {
    SentimentOptions opt;
    opt.mode = mode;
    const auto s = build_sentiment(data.fundamentals, opt);
    REQUIRE(s.rows.size() == data.fundamentals.size());
    std::vector<double> toned, pc1;
    std::size_t missing = 0, r = 0;
    for (const auto& row : s.rows) {
      if (!row.sent) {
        ++missing;
        CHECK(row.reason == "missing sentiment input");
        continue;
      }
      toned.push_back(*row.sent_detoned);
      pc1.push_back(s.pca.scores(static_cast<Eigen::Index>(r++), 0));
    }
    CHECK(missing == 1);
    CHECK(std::abs(sample_corr(Eigen::Map<Eigen::VectorXd>(toned.data(), static_cast<Eigen::Index>(toned.size())),
                               Eigen::Map<Eigen::VectorXd>(pc1.data(), static_cast<Eigen::Index>(pc1.size()))) ) < 1e-8);
    const auto text = serialize_sentiment(s);
    const auto back = parse_sentiment(text);
    REQUIRE(back.size() == s.rows.size());
    CHECK(back[0].sent == s.rows[0].sent);
  }
}

TEST_CASE("winsorize clamps to empirical quantiles") {
  Eigen::VectorXd v(11);
  v << 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 100;
  const auto w = winsorize(v, 0.1, 0.9);
  CHECK(w(0) == 1.0);
  CHECK(w(10) == 9.0);
  CHECK(w(5) == 5.0);
  CHECK_THROWS_AS(winsorize(v, 0.9, 0.1), ConfigError);
  CHECK(parse_loading_mode("fitted") == LoadingMode::Fitted);
  CHECK_THROWS_AS(parse_loading_mode("pc1"), ConfigError);
}
