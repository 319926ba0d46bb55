#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "survhte/did_test.hpp"
#include "survhte/stats.hpp"
#include "survhte/survival.hpp"

using namespace survhte;

namespace {

struct Sample {
  Matrix x;
  std::vector<double> time;
  Flags event;
};

// Exponential times with hazard exp(x * beta), optional uniform censoring on [0, cens].
Sample exponential_sample(const Matrix& x, const Vector& beta, double cens, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Sample s;
  s.x = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double rate = std::exp(x.row(i).dot(beta));
    const double t = -std::log(uniform_open(rng)) / rate;
    const double c = cens > 0 ? cens * u(rng) : INFINITY;
    s.time.push_back(std::min(t, c));
    s.event.push_back(t <= c);
  }
  return s;
}

Matrix binary_column(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  Matrix x(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) = coin(rng);
  return x;
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("median and quantiles") {
    CHECK(stats::median({3, 1, 2}) == 2.0);
    CHECK(stats::median({4, 1, 2, 3}) == 2.5);
    const std::vector<double> s{1, 2, 3, 4, 5};
    CHECK(stats::quantile_sorted(s, 0.25) == doctest::Approx(2.0));
    CHECK(stats::quantile_sorted(s, 0.1) == doctest::Approx(1.4));
  }

  TEST_CASE("split thresholds partition the sample") {
    const std::vector<double> s{1, 2, 2, 2, 3, 4};
    const double c = stats::split_threshold_sorted(s, 0.5);
    const auto below = std::count_if(s.begin(), s.end(), [&](double v) { return v <= c; });
    const auto above = std::count_if(s.begin(), s.end(), [&](double v) { return v >= c; });
    CHECK(below + above == static_cast<long>(s.size()));
    CHECK(std::isnan(stats::split_threshold_sorted(std::vector<double>{1, 1, 1}, 0.5)));
  }

  TEST_CASE("normal and t tails") {
    CHECK(stats::normal_two_sided_p(1.959963985) == doctest::Approx(0.05).epsilon(1e-6));
    CHECK(stats::normal_two_sided_p(0.0) == doctest::Approx(1.0));
    CHECK(stats::student_two_sided_p(2.228138852, 10) == doctest::Approx(0.05).epsilon(1e-6));
  }

  TEST_CASE("pearson correlation") {
    const std::vector<double> x{1, 2, 3, 4}, y{2, 4, 6, 8}, z{1, 1, 1, 1};
    CHECK(stats::pearson(x, y) == doctest::Approx(1.0));
    CHECK(std::isnan(stats::pearson(x, z)));
  }

  TEST_CASE("median variance shrinks like 1/n") {
    Rng rng(3);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(4000);
    for (double& e : v) e = g(rng);
    // Asymptotic variance of a normal median is pi / (2n).
    CHECK(stats::median_variance(v) == doctest::Approx(M_PI / 2.0 / 4000.0).epsilon(0.15));
  }
}

TEST_SUITE("survival") {
  TEST_CASE("Kaplan-Meier hand computations") {
    const auto a = kaplan_meier(std::vector<double>{1, 2, 3}, Flags{1, 1, 1});
    CHECK(a.at(1) == doctest::Approx(2.0 / 3.0));
    CHECK(a.at(2) == doctest::Approx(1.0 / 3.0));
    CHECK(a.at(3) == doctest::Approx(0.0));
    CHECK(a.at(0.5) == 1.0);

    const auto b = kaplan_meier(std::vector<double>{1, 2}, Flags{1, 0});
    CHECK(b.at(1) == doctest::Approx(0.5));
    CHECK(b.at(2) == doctest::Approx(0.5));

    const auto c = kaplan_meier(std::vector<double>{1, 2, 3}, Flags{0, 0, 0});
    CHECK(c.at(0.0) == 1.0);
    CHECK(c.at(10.0) == 1.0);
  }

  TEST_CASE("Kaplan-Meier on uncensored data equals one minus the empirical CDF") {
    Rng rng(11);
    std::exponential_distribution<double> e(1.0);
    for (std::size_t n : {1u, 7u, 50u, 300u}) {
      std::vector<double> t(n);
      for (double& v : t) v = std::round(e(rng) * 20.0) / 20.0;  // ties included
      const auto km = kaplan_meier(t, Flags(n, 1));
      for (double s : t) {
        const double ecdf = static_cast<double>(std::count_if(t.begin(), t.end(), [&](double v) { return v <= s; })) /
                            static_cast<double>(n);
        CHECK(km.at(s) == doctest::Approx(1.0 - ecdf).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("Kaplan-Meier curve is nonincreasing") {
    Rng rng(5);
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution coin(0.6);
    std::vector<double> t(400);
    Flags ev(400);
    for (std::size_t i = 0; i < 400; ++i) {
      t[i] = e(rng);
      ev[i] = coin(rng);
    }
    const auto km = kaplan_meier(t, ev);
    CHECK(std::is_sorted(km.times.begin(), km.times.end()));
    for (std::size_t k = 1; k < km.survival.size(); ++k) CHECK(km.survival[k] <= km.survival[k - 1]);
  }

  TEST_CASE("Cox recovers the log hazard ratio of a two-hazard simulation") {
    const Matrix w = binary_column(10000, 1);
    const Sample s = exponential_sample(w, (Vector(1) << std::log(2.0)).finished(), 0.0, 2);
    const CoxFit fit = fit_cox(s.x, s.time, s.event);
    CHECK(fit.converged);
    CHECK(std::abs(fit.coefficients(0) - std::log(2.0)) < 0.05);
  }

  TEST_CASE("huge ridge drives coefficients to zero") {
    Matrix x(300, 2);
    Rng rng(9);
    std::normal_distribution<double> g;
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = g(rng), x(i, 1) = g(rng);
    const Sample s = exponential_sample(x, (Vector(2) << 1.0, -1.0).finished(), 3.0, 4);
    const CoxFit fit = fit_cox(s.x, s.time, s.event, 1e12);
    CHECK(fit.coefficients.cwiseAbs().maxCoeff() < 1e-6);
  }

  TEST_CASE("a constant column gets coefficient zero and p-value one") {
    Matrix x = Matrix::Zero(200, 2);
    const Matrix w = binary_column(200, 8);
    x.col(1) = w.col(0);
    const Sample s = exponential_sample(x, (Vector(2) << 0.0, 0.5).finished(), 0.0, 9);
    const CoxFit fit = fit_cox(s.x, s.time, s.event);
    CHECK(fit.coefficients(0) == 0.0);
    CHECK(fit.wald_p[0] == 1.0);
    CHECK(fit.wald_p[1] < 1.0);
  }

  TEST_CASE("all-censored input is rejected") {
    Matrix x = binary_column(10, 1);
    std::vector<double> t(10, 1.0);
    CHECK_THROWS_WITH_AS(fit_cox(x, t, Flags(10, 0)), doctest::Contains("no events"), std::invalid_argument);
  }

  TEST_CASE("penalized objective at the estimate is at least its value at zero") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      std::normal_distribution<double> g;
      Matrix x(120, 3);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = g(rng);
      const Sample s = exponential_sample(x, (Vector(3) << 0.4, -0.2, 0.0).finished(), 2.0, seed + 100);
      const double ridge = seed % 2 ? 0.1 : 0.0;
      const CoxFit fit = fit_cox(s.x, s.time, s.event, ridge);
      CHECK(cox_objective(s.x, s.time, s.event, ridge, {}, fit.coefficients) >=
            cox_objective(s.x, s.time, s.event, ridge, {}, Vector::Zero(3)) - 1e-12);
      for (double p : fit.wald_p) CHECK((p >= 0.0 && p <= 1.0));
      const Matrix sym = fit.covariance - fit.covariance.transpose();
      CHECK(sym.cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  TEST_CASE("binary-design coefficient sign matches the log-rank statistic") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const Matrix w = binary_column(80, seed);
      const double beta = (static_cast<double>(seed % 5) - 2.0) * 0.3;
      const Sample s = exponential_sample(w, (Vector(1) << beta).finished(), 2.0, seed + 50);
      const CoxFit fit = fit_cox(s.x, s.time, s.event);
      Flags g(80);
      for (int i = 0; i < 80; ++i) g[static_cast<std::size_t>(i)] = w(i, 0) > 0.5;
      const LogRankResult lr = logrank_test(s.time, s.event, g);
      if (std::abs(lr.observed_minus_expected) > 1e-9)
        CHECK((fit.coefficients(0) > 0) == (lr.observed_minus_expected > 0));
    }
  }

  TEST_CASE("predict_survival basics") {
    const Matrix w = binary_column(500, 21);
    const Sample s = exponential_sample(w, (Vector(1) << 0.7).finished(), 3.0, 22);
    const CoxFit fit = fit_cox(s.x, s.time, s.event);
    const std::vector<double> zero{0.0}, one{1.0};
    CHECK(predict_survival(fit, one, 0.0) == 1.0);
    CHECK(predict_survival(fit, zero, 1.0) == doctest::Approx(std::exp(-fit.baseline_cumhaz.at(1.0))));
    double prev = 1.0;
    for (double t = 0.0; t < 5.0; t += 0.1) {
      const double v = predict_survival(fit, one, t);
      CHECK(v <= prev + 1e-15);
      prev = v;
    }
    CHECK(predict_survival(fit, one, 1.0) < predict_survival(fit, zero, 1.0));
    CHECK(predict_survival(fit, one, 1e6) == predict_survival(fit, one, 1e7));
  }

  TEST_CASE("Breslow baseline agrees with Kaplan-Meier without covariate effects") {
    Rng rng(31);
    std::normal_distribution<double> g;
    Matrix x(2000, 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = g(rng);
    const Sample s = exponential_sample(x, Vector::Zero(1), 4.0, 32);
    const CoxFit fit = fit_cox(s.x, s.time, s.event);
    const double med = stats::median(s.time);
    const double mean_x = x.col(0).mean();
    const std::vector<double> centre{mean_x};
    CHECK(std::abs(predict_survival(fit, centre, med) - kaplan_meier(s.time, s.event).at(med)) < 0.03);
  }

  TEST_CASE("score residual columns sum to the score, zero at the unpenalized estimate") {
    Rng rng(41);
    std::normal_distribution<double> g;
    Matrix x(150, 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, 0) = g(rng), x(i, 1) = g(rng) > 0;
    const Sample s = exponential_sample(x, (Vector(2) << 0.5, 0.3).finished(), 2.0, 42);
    const CoxFit fit = fit_cox(s.x, s.time, s.event);
    const Matrix r = cox_score_residuals(s.x, s.time, s.event, fit);
    CHECK(r.rows() == 150);
    CHECK(r.colwise().sum().cwiseAbs().maxCoeff() < 1e-5);
  }

  TEST_CASE("pattern Cox agrees with the general fitter") {
    const Matrix patterns = (Matrix(4, 3) << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1).finished();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed);
      std::bernoulli_distribution coin(0.5);
      const std::size_t n = 300;
      Flags pattern(n);
      Matrix x(static_cast<Eigen::Index>(n), 3);
      for (std::size_t i = 0; i < n; ++i) {
        pattern[i] = static_cast<std::uint8_t>(2 * coin(rng) + coin(rng));
        x.row(static_cast<Eigen::Index>(i)) = patterns.row(pattern[i]);
      }
      const Sample s = exponential_sample(x, (Vector(3) << 0.3, -0.2, 0.6).finished(), 3.0, seed + 7);
      std::vector<double> t = s.time;
      // Coarsen times so ties occur.
      for (double& v : t) v = std::ceil(v * 10.0) / 10.0;
      const auto order = ascending_time_order(t);
      const PatternCoxFit fast = fit_pattern_cox(t, s.event, pattern, order, patterns);
      const CoxFit full = fit_cox(x, t, s.event);
      REQUIRE(fast.valid);
      for (Eigen::Index j = 0; j < 3; ++j) {
        CHECK(fast.coefficients(j) == doctest::Approx(full.coefficients(j)).epsilon(1e-6));
        CHECK(fast.covariance(j, j) == doctest::Approx(full.covariance(j, j)).epsilon(1e-6));
      }

      // Robust covariance against the sandwich built from row-wise score residuals.
      const PatternCoxFit robust = fit_pattern_cox(t, s.event, pattern, order, patterns, true);
      const Matrix r = cox_score_residuals(x, t, s.event, full);
      const Matrix sandwich = full.covariance * (r.transpose() * r) * full.covariance;
      for (Eigen::Index j = 0; j < 3; ++j)
        CHECK(robust.covariance(j, j) == doctest::Approx(sandwich(j, j)).epsilon(1e-6));
    }
  }

  TEST_CASE("pattern Cox without events is invalid") {
    const Matrix patterns = (Matrix(2, 1) << 0, 1).finished();
    std::vector<double> t{1, 2, 3, 4};
    const Flags pattern{0, 1, 0, 1};
    const auto fit = fit_pattern_cox(t, Flags(4, 0), pattern, ascending_time_order(t), patterns);
    CHECK_FALSE(fit.valid);
  }
}

TEST_SUITE("did") {
  TEST_CASE("statistic by direct substitution") {
    std::array<std::array<CellSummary, 2>, 2> cells{};
    // (m01, m00, m11, m10) = (2, 1, 1, 2), squared median standard error 1/100 per cell.
    cells[0][1].median = 2;
    cells[0][0].median = 1;
    cells[1][1].median = 1;
    cells[1][0].median = 2;
    for (auto& row : cells)
      for (auto& c : row) c.median_variance = 1.0 / 100.0, c.count = 100;
    CHECK(did_statistic(cells) == doctest::Approx(10.0));
  }

  TEST_CASE("one predicted subgroup is degenerate with a uniform p-value") {
    std::vector<double> t{1, 2, 3, 4, 5, 6};
    const Flags w{0, 1, 0, 1, 0, 1}, g(6, 1);
    std::vector<double> ps;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      Rng rng(seed);
      const TestResult r = diff_in_diff_test(t, w, g, rng);
      CHECK(r.degenerate);
      CHECK(std::isnan(r.statistic));
      ps.push_back(r.p_value);
    }
    const double m = stats::mean(ps);
    CHECK(m == doctest::Approx(0.5).epsilon(0.15));
  }

  TEST_CASE("null rejection rate is calibrated") {
    Rng rng(77);
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution coin(0.5);
    int rejections = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      std::vector<double> t(250);
      Flags w(250), g(250);
      for (std::size_t i = 0; i < 250; ++i) {
        t[i] = e(rng);
        w[i] = coin(rng);
        g[i] = coin(rng);
      }
      rejections += diff_in_diff_test(t, w, g, rng).p_value < 0.05;
    }
    CHECK(rejections >= 20);
    CHECK(rejections <= 90);
  }

  TEST_CASE("relabeling subgroup and arm flips the sign only") {
    Rng rng(5);
    std::exponential_distribution<double> e(1.0);
    std::bernoulli_distribution coin(0.5);
    std::vector<double> t(200);
    Flags w(200), g(200), w2(200), g2(200);
    for (std::size_t i = 0; i < 200; ++i) {
      t[i] = e(rng) * (1.0 + (i % 3));
      w[i] = coin(rng);
      g[i] = coin(rng);
      w2[i] = !w[i];
      g2[i] = !g[i];
    }
    Rng r1(1), r2(1);
    const TestResult a = diff_in_diff_test(t, w, g, r1);
    const TestResult b = diff_in_diff_test(t, w2, g2, r2);
    CHECK(std::abs(a.statistic) == doctest::Approx(std::abs(b.statistic)));
    CHECK(a.p_value == doctest::Approx(b.p_value));
  }
}
