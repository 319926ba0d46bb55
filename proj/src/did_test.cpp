#include "survhte/did_test.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "survhte/stats.hpp"

namespace survhte {

double did_statistic(const std::array<std::array<CellSummary, 2>, 2>& c) {
  const double numerator = (c[0][1].median - c[0][0].median) - (c[1][1].median - c[1][0].median);
  const double denom2 = c[0][0].median_variance + c[0][1].median_variance + c[1][0].median_variance +
                        c[1][1].median_variance;
  if (!(denom2 > 0.0) || !std::isfinite(denom2)) return std::numeric_limits<double>::quiet_NaN();
  return numerator / std::sqrt(denom2);
}

TestResult diff_in_diff_test(std::span<const double> time, std::span<const std::uint8_t> treatment,
                             std::span<const std::uint8_t> subgroup, Rng& rng) {
  if (time.size() != treatment.size() || time.size() != subgroup.size())
    throw std::invalid_argument("diff_in_diff_test: predicted subgroup length differs from n");
  std::array<std::array<std::vector<double>, 2>, 2> groups;
  for (std::size_t i = 0; i < time.size(); ++i) groups[subgroup[i] ? 1 : 0][treatment[i] ? 1 : 0].push_back(time[i]);

  TestResult out;
  bool small = false;
  for (int g = 0; g < 2; ++g) {
    for (int a = 0; a < 2; ++a) {
      auto& v = groups[g][a];
      CellSummary& cell = out.cells[g][a];
      cell.count = v.size();
      if (v.size() < 2) {
        small = true;
        continue;
      }
      cell.median = stats::median(v);
      cell.variance = stats::sample_variance(v);
      cell.median_variance = stats::median_variance(v);
    }
  }
  const double z = small ? std::numeric_limits<double>::quiet_NaN() : did_statistic(out.cells);
  if (std::isnan(z)) {
    out.degenerate = true;
    out.statistic = std::numeric_limits<double>::quiet_NaN();
    out.p_value = uniform_open(rng);
    return out;
  }
  out.statistic = z;
  out.p_value = stats::normal_two_sided_p(z);
  return out;
}

TestResult diff_in_diff_test(const TrialData& data, std::span<const std::uint8_t> subgroup, Rng& rng) {
  return diff_in_diff_test(data.time, data.treatment, subgroup, rng);
}

}  // namespace survhte
