#include "survhte/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

namespace survhte::stats {

namespace {
constexpr double kZ975 = 1.959963984540054;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) {
  if (std::isnan(z)) return 1.0;
  return clamp_p(std::erfc(std::fabs(z) / std::sqrt(2.0)));
}

double student_two_sided_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(dof);
  return clamp_p(2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

double mean(std::span<const double> v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return kNaN;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size() - 1);
}

double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

double quantile_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) return kNaN;
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double split_threshold_sorted(std::span<const double> sorted, double prob) {
  if (sorted.empty()) return kNaN;
  const double q = quantile_sorted(sorted, prob);
  auto it = std::upper_bound(sorted.begin(), sorted.end(), q);
  if (it == sorted.begin() || it == sorted.end()) return kNaN;
  return 0.5 * (*(it - 1) + *it);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) return kNaN;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return kNaN;
  return sxy / std::sqrt(sxx * syy);
}

double median_variance(std::vector<double> v) {
  const std::size_t n = v.size();
  if (n < 2) return kNaN;
  std::sort(v.begin(), v.end());
  const double nd = static_cast<double>(n);
  auto c = static_cast<std::ptrdiff_t>(std::lround((nd + 1.0) / 2.0 - kZ975 * std::sqrt(nd / 4.0)));
  c = std::max<std::ptrdiff_t>(c, 1);
  const double lo = v[static_cast<std::size_t>(c - 1)];
  const double hi = v[n - static_cast<std::size_t>(c)];
  const double se = (hi - lo) / (2.0 * kZ975);
  return se * se;
}

}  // namespace survhte::stats
