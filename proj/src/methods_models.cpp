#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "methods_internal.hpp"
#include "survhte/did_test.hpp"

namespace survhte::methods {

namespace {

// Smallest p-value, Bonferroni-adjusted over all entries; index is the first
// minimizer.
std::pair<double, std::size_t> bonferroni_min(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] < p[best]) best = j;
  return {stats::clamp_p(p[best] * static_cast<double>(p.size())), best};
}

std::vector<double> inverse_p(const std::vector<double>& p) {
  std::vector<double> imp(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) imp[j] = 1.0 / detail::clamp_tiny(p[j]);
  return imp;
}

}  // namespace

MethodResult fit_univariate_interaction(const TrialData& train, const MethodOptions&) {
  train.validate();
  if (train.event_count() < 2) throw std::invalid_argument("univariate interaction needs at least two events");
  const std::size_t n = train.n(), p = train.p();
  std::vector<double> pv(p, 1.0);
  Matrix design(static_cast<Eigen::Index>(n), 3);
  for (std::size_t i = 0; i < n; ++i) design(static_cast<Eigen::Index>(i), 1) = train.treatment[i];
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = train.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      design(static_cast<Eigen::Index>(i), 0) = x;
      design(static_cast<Eigen::Index>(i), 2) = x * train.treatment[i];
    }
    try {
      pv[j] = fit_cox(design, train.time, train.event).wald_p[2];
    } catch (const std::exception&) {
      pv[j] = 1.0;
    }
  }
  MethodResult res;
  const auto [het, top] = bonferroni_min(pv);
  res.het_p = het;
  res.importance = inverse_p(pv);
  res.predictor = SubgroupPredictor(detail::oriented_median_rule(train, top));
  return res;
}

MethodResult fit_univariate_ttest(const TrialData& train, Rng& rng, const MethodOptions&) {
  train.validate();
  if (train.n() < 4) throw std::invalid_argument("univariate t-test needs at least four samples");
  const std::size_t n = train.n(), p = train.p();
  std::vector<double> pv(p, 1.0);
  Flags upper(n);
  bool any_degenerate = false;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> col = train.column(j);
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    const double s = stats::split_threshold_sorted(sorted, 0.5);
    for (std::size_t i = 0; i < n; ++i) upper[i] = !std::isnan(s) && col[i] > s;
    const TestResult t = diff_in_diff_test(train, upper, rng);
    pv[j] = t.p_value;
    any_degenerate = any_degenerate || t.degenerate;
  }
  MethodResult res;
  const auto [het, top] = bonferroni_min(pv);
  res.het_p = het;
  res.het_degenerate = any_degenerate;
  res.importance = inverse_p(pv);
  res.predictor = SubgroupPredictor(detail::oriented_median_rule(train, top));
  return res;
}

MethodResult fit_multivariate_cox(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  if (train.event_count() < 2) throw std::invalid_argument("multivariate Cox needs at least two events");
  const std::size_t n = train.n(), p = train.p();
  Matrix design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * p + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double w = train.treatment[i];
    design(ii, 0) = w;
    for (std::size_t j = 0; j < p; ++j) {
      const double x = train.covariates(ii, static_cast<Eigen::Index>(j));
      design(ii, static_cast<Eigen::Index>(1 + j)) = x;
      design(ii, static_cast<Eigen::Index>(1 + p + j)) = w * x;
    }
  }
  Flags unpenalized(2 * p + 1, 0);
  unpenalized[0] = 1;
  auto fit = std::make_shared<CoxFit>(fit_cox(design, train.time, train.event, opt.ridge, unpenalized));
  MethodResult res;
  std::vector<double> pv(fit->wald_p.begin() + static_cast<std::ptrdiff_t>(1 + p), fit->wald_p.end());
  res.importance = inverse_p(pv);
  if (!fit->converged) res.note = "cox did not converge";
  res.predictor = SubgroupPredictor(CoxArrSign{std::move(fit), p});
  return res;
}

MethodResult fit_oracle(const TrialData& train, const SubgroupDefinition& truth) {
  train.validate();
  if (!train.true_subgroup) throw std::invalid_argument("oracle needs ground-truth subgroup labels");
  truth.check_dimension(train.p());
  const std::vector<std::size_t> order = ascending_time_order(train.time);
  const PatternCoxFit fit = detail::interaction_fit(train, *train.true_subgroup, order);
  MethodResult res;
  res.het_p = fit.valid ? fit.wald_p[2] : 1.0;
  std::vector<double> imp(train.p(), 0.0);
  for (std::size_t v : truth.variables()) imp[v] = 1.0;
  res.importance = std::move(imp);
  res.predictor = SubgroupPredictor(truth.rule());
  return res;
}

}  // namespace survhte::methods
