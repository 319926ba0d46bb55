#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survhte/methods.hpp"
#include "survhte/trial_data.hpp"

namespace survhte::metrics {

struct Estimate {
  double mean = 0.0;
  double half_width = 0.0;  // 95% normal-approximation half-width
  std::size_t count = 0;
};

/// Fraction of p-values strictly below alpha with a binomial half-width.
/// Throws std::invalid_argument on an empty list.
Estimate rejection_rate(std::span<const double> pvalues, double alpha = 0.05);

/// Mean of a proportion sample with half-width 1.96 sqrt(m(1-m)/R).
Estimate proportion(std::span<const double> hits);

/// Mean with half-width 1.96 sd / sqrt(R).
Estimate mean_estimate(std::span<const double> values);

/// Whether the top-ranked variable (smallest index on ties) is predictive.
/// All-zero importance counts as a miss.
bool top_rank_hit(std::span<const double> importance, std::span<const std::size_t> predictive);

/// Area under the precision-recall curve of the ranking by descending
/// importance. Throws std::invalid_argument without positive labels.
double average_precision(std::span<const double> importance, std::span<const std::uint8_t> labels);

/// Fraction of rows whose prediction equals the ground-truth label. Throws
/// when the data carry no labels.
double classification_accuracy(const methods::SubgroupPredictor& predictor, const TrialData& validation);
double classification_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

}  // namespace survhte::metrics
