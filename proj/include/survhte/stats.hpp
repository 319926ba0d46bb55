#pragma once

#include <span>
#include <vector>

namespace survhte::stats {

double normal_cdf(double z);

/// Two-sided p-value of a standard-normal statistic.
double normal_two_sided_p(double z);

/// Two-sided p-value of a Student t statistic.
double student_two_sided_p(double t, double dof);

double mean(std::span<const double> v);

/// Unbiased sample variance; NaN below two values.
double sample_variance(std::span<const double> v);

/// Median of an unsorted sample (average of the middle pair for even sizes).
double median(std::vector<double> v);

/// Linear-interpolation quantile (the numpy default) of a sorted sample.
double quantile_sorted(std::span<const double> sorted, double prob);

/// Split value between the largest sample value <= quantile(prob) and the next
/// larger distinct value. `x <= s` and `x >= s` then partition the sample
/// exactly. Returns NaN when every value lies at or below the quantile.
double split_threshold_sorted(std::span<const double> sorted, double prob);

/// Pearson correlation; NaN when either input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

/// Squared standard error of the sample median from the distribution-free
/// order-statistic interval of McKean and Schrader.
double median_variance(std::vector<double> v);

inline double clamp_p(double p) { return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p); }

}  // namespace survhte::stats
