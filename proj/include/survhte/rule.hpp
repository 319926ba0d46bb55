#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace survhte {

enum class Direction { kGreaterEqual, kLessEqual };

struct Clause {
  std::size_t index = 0;  // 0-based covariate index
  double threshold = 0.0;
  Direction direction = Direction::kGreaterEqual;

  bool holds(std::span<const double> x) const {
    const double v = x[index];
    return direction == Direction::kGreaterEqual ? v >= threshold : v <= threshold;
  }
  bool operator==(const Clause&) const = default;
};

/// Conjunction of clauses, optionally complemented. An empty conjunction
/// holds everywhere.
struct ThresholdRule {
  std::vector<Clause> clauses;
  bool complement = false;

  bool contains(std::span<const double> x) const;

  /// Human-readable form using 1-based names, e.g. "x17>=-1 & x18>=-1" or
  /// "not(x3<=0.25)". Contains no commas.
  std::string describe() const;

  bool operator==(const ThresholdRule&) const = default;
};

/// Ground-truth subgroup function G of the generator: a non-complemented
/// conjunction with distinct variable indices.
class SubgroupDefinition {
 public:
  SubgroupDefinition() = default;
  /// Throws std::invalid_argument when empty or indices repeat.
  explicit SubgroupDefinition(std::vector<Clause> clauses);

  /// x_i >= threshold for every listed 0-based index.
  static SubgroupDefinition at_least(std::vector<std::size_t> indices, double threshold = -1.0);

  /// Parses "x17>=-1 & x18>=-1" (also accepts "<=").
  static SubgroupDefinition parse(const std::string& text);

  bool contains(std::span<const double> x) const { return rule_.contains(x); }
  const std::vector<Clause>& clauses() const { return rule_.clauses; }
  const ThresholdRule& rule() const { return rule_; }
  std::vector<std::size_t> variables() const;
  std::string describe() const { return rule_.describe(); }

  /// Throws when an index is not below p.
  void check_dimension(std::size_t p) const;

 private:
  ThresholdRule rule_;
};

/// Formats a double with enough digits to round-trip.
std::string format_double(double v);

}  // namespace survhte
