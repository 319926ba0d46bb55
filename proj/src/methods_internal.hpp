#pragma once

#include <chrono>
#include <vector>

#include "survhte/methods.hpp"
#include "survhte/stats.hpp"

namespace survhte::methods::detail {

inline double clamp_tiny(double p) { return p < 1e-300 ? 1e-300 : p; }

/// Rows of `order` (ascending time) whose mask entry is set.
inline std::vector<std::size_t> masked_order(const std::vector<std::size_t>& order, const Flags& mask) {
  std::vector<std::size_t> out;
  out.reserve(order.size());
  for (std::size_t r : order)
    if (mask[r]) out.push_back(r);
  return out;
}

/// Cox(W) on the rows of `sorted_rows`.
inline PatternCoxFit treatment_fit(const TrialData& d, std::span<const std::size_t> sorted_rows) {
  static const Matrix patterns = (Matrix(2, 1) << 0.0, 1.0).finished();
  return fit_pattern_cox(d.time, d.event, d.treatment, sorted_rows, patterns);
}

/// Treatment benefit as a z statistic: positive when treated hazard is lower.
/// NaN when the fit is invalid.
inline double benefit_z(const TrialData& d, std::span<const std::size_t> sorted_rows) {
  const PatternCoxFit fit = treatment_fit(d, sorted_rows);
  if (!fit.valid) return std::numeric_limits<double>::quiet_NaN();
  return -fit.z(0);
}

/// Cox(W, Z, ZW) over `sorted_rows`; coefficient 2 is the interaction.
// pattern = 2z + w with covariates (w, z, zw)
inline const Matrix& interaction_fit_patterns() {
  static const Matrix patterns = (Matrix(4, 3) << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1).finished();
  return patterns;
}

inline PatternCoxFit interaction_fit(const TrialData& d, const Flags& z, std::span<const std::size_t> sorted_rows,
                                     bool robust = false) {
  Flags pattern(d.n());
  for (std::size_t i = 0; i < d.n(); ++i)
    pattern[i] = static_cast<std::uint8_t>((z[i] ? 2 : 0) + (d.treatment[i] ? 1 : 0));
  return fit_pattern_cox(d.time, d.event, pattern, sorted_rows, interaction_fit_patterns(), robust);
}

/// Distinct split values at `probs` over the given values.
inline std::vector<double> candidate_thresholds(std::vector<double> values, std::span<const double> probs) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double prob : probs) {
    const double s = stats::split_threshold_sorted(values, prob);
    if (std::isnan(s)) continue;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

inline double nan_to_low(double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; }

/// Median split of column j oriented toward the side with larger KM ARR(1).
ThresholdRule oriented_median_rule(const TrialData& d, std::size_t j);

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace survhte::methods::detail
