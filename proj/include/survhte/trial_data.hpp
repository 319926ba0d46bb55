#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "survhte/common.hpp"

namespace survhte {

/// One simulated (or user-supplied) randomized trial.
struct TrialData {
  Matrix covariates;             // n x p
  Flags treatment;               // W
  std::vector<double> time;      // observed time U
  Flags event;                   // E
  std::optional<Flags> true_subgroup;  // G, generator ground truth only

  std::size_t n() const { return time.size(); }
  std::size_t p() const { return static_cast<std::size_t>(covariates.cols()); }

  std::span<const double> row(std::size_t i) const {
    return {covariates.data() + i * p(), p()};
  }

  std::vector<double> column(std::size_t j) const;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

  TrialData subset(std::span<const std::size_t> rows) const;

  /// Rows [begin, end).
  TrialData slice(std::size_t begin, std::size_t end) const;

  std::size_t event_count() const;
};

}  // namespace survhte
