#include "survhte/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace survhte::metrics {

Estimate proportion(std::span<const double> hits) {
  if (hits.empty()) throw std::invalid_argument("proportion of an empty sample");
  Estimate e;
  e.count = hits.size();
  e.mean = std::accumulate(hits.begin(), hits.end(), 0.0) / static_cast<double>(e.count);
  e.half_width = 1.96 * std::sqrt(e.mean * (1.0 - e.mean) / static_cast<double>(e.count));
  return e;
}

Estimate rejection_rate(std::span<const double> pvalues, double alpha) {
  if (pvalues.empty()) throw std::invalid_argument("rejection rate of an empty p-value list");
  std::vector<double> hits(pvalues.size());
  std::transform(pvalues.begin(), pvalues.end(), hits.begin(), [&](double p) { return p < alpha ? 1.0 : 0.0; });
  return proportion(hits);
}

Estimate mean_estimate(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean of an empty sample");
  Estimate e;
  e.count = values.size();
  const double r = static_cast<double>(e.count);
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / r;
  if (e.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.half_width = 1.96 * std::sqrt(ss / (r - 1.0)) / std::sqrt(r);
  }
  return e;
}

bool top_rank_hit(std::span<const double> importance, std::span<const std::size_t> predictive) {
  const auto top = methods::top_variable(importance);
  return top && std::find(predictive.begin(), predictive.end(), *top) != predictive.end();
}

double average_precision(std::span<const double> importance, std::span<const std::uint8_t> labels) {
  if (importance.size() != labels.size()) throw std::invalid_argument("average_precision: length mismatch");
  const auto positives = std::count_if(labels.begin(), labels.end(), [](std::uint8_t l) { return l != 0; });
  if (positives == 0) throw std::invalid_argument("average_precision: no positive labels");
  std::vector<std::size_t> rank(importance.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  double ap = 0.0, hits = 0.0;
  for (std::size_t k = 0; k < rank.size(); ++k) {
    if (!labels[rank[k]]) continue;
    hits += 1.0;
    ap += hits / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(positives);
}

double classification_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("classification_accuracy: length mismatch or empty");
  std::size_t agree = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) agree += (predicted[i] != 0) == (truth[i] != 0);
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

double classification_accuracy(const methods::SubgroupPredictor& predictor, const TrialData& validation) {
  if (!validation.true_subgroup) throw std::invalid_argument("validation data carry no ground-truth labels");
  const Flags pred = predictor.predict(validation.covariates);
  return classification_accuracy(pred, *validation.true_subgroup);
}

}  // namespace survhte::metrics
