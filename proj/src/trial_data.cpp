#include "survhte/trial_data.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace survhte {

std::vector<double> TrialData::column(std::size_t j) const {
  std::vector<double> out(n());
  for (std::size_t i = 0; i < n(); ++i) out[i] = covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

void TrialData::validate() const {
  const std::size_t rows = n();
  if (static_cast<std::size_t>(covariates.rows()) != rows)
    throw std::invalid_argument("covariate rows (" + std::to_string(covariates.rows()) +
                                ") differ from time length (" + std::to_string(rows) + ")");
  if (treatment.size() != rows) throw std::invalid_argument("treatment length differs from n");
  if (event.size() != rows) throw std::invalid_argument("event length differs from n");
  if (true_subgroup && true_subgroup->size() != rows)
    throw std::invalid_argument("true_subgroup length differs from n");
  for (std::size_t i = 0; i < rows; ++i) {
    if (!(time[i] > 0.0)) throw std::invalid_argument("time must be strictly positive (row " + std::to_string(i) + ")");
    if (treatment[i] > 1) throw std::invalid_argument("treatment flag not in {0,1}");
    if (event[i] > 1) throw std::invalid_argument("event flag not in {0,1}");
  }
}

TrialData TrialData::subset(std::span<const std::size_t> rows) const {
  TrialData out;
  out.covariates.resize(static_cast<Eigen::Index>(rows.size()), covariates.cols());
  out.treatment.reserve(rows.size());
  out.time.reserve(rows.size());
  out.event.reserve(rows.size());
  if (true_subgroup) out.true_subgroup.emplace().reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    out.covariates.row(static_cast<Eigen::Index>(k)) = covariates.row(static_cast<Eigen::Index>(i));
    out.treatment.push_back(treatment[i]);
    out.time.push_back(time[i]);
    out.event.push_back(event[i]);
    if (true_subgroup) out.true_subgroup->push_back((*true_subgroup)[i]);
  }
  return out;
}

TrialData TrialData::slice(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  return subset(rows);
}

std::size_t TrialData::event_count() const {
  return static_cast<std::size_t>(std::count(event.begin(), event.end(), std::uint8_t{1}));
}

}  // namespace survhte
