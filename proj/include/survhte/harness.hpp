#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "survhte/dgp.hpp"
#include "survhte/methods.hpp"
#include "survhte/metrics.hpp"

namespace survhte::harness {

/// Malformed scenario file or inconsistent settings. `line` is 0 when the
/// problem is not tied to one line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string source, std::size_t line, std::string field, const std::string& message);
  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string source_;
  std::size_t line_;
  std::string field_;
};

struct ScenarioSpec {
  std::string id = "scenario";
  dgp::GeneratorConfig generator;  // generator.n is the discovery size
  std::string covariates_path;      // empirical matrix file, empty for Gaussian
  std::filesystem::path calibration_path;
  bool auto_calibrate = false;
  std::size_t calibration_mc_size = 100000;
  std::uint64_t calibration_seed = 1;
  std::size_t arr_points = 10;
  std::size_t repetitions = 100;
  double train_fraction = 0.5;
  std::size_t validation_n = 0;  // 0 means the discovery size
  std::vector<methods::MethodId> methods{methods::kAllMethods.begin(), methods::kAllMethods.end()};
  std::uint64_t base_seed = 1;
  double alpha = 0.05;
  std::filesystem::path output_dir = "results";

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
  std::size_t discovery_n() const { return generator.n; }
  std::size_t validation_size() const { return validation_n ? validation_n : generator.n; }
  std::size_t train_size() const;
  std::vector<std::size_t> predictive_variables() const { return generator.subgroup.variables(); }
  /// FNV-1a over the canonical text of every field.
  std::uint64_t hash() const;
  std::string canonical_text() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown or repeated keys
/// and unparsable values throw ConfigError with the line and key. Relative
/// paths resolve against `base_dir`.
ScenarioSpec parse_scenario(std::istream& in, const std::string& source_name,
                            const std::filesystem::path& base_dir = {});
ScenarioSpec load_scenario(const std::filesystem::path& path);

/// Seed of repetition `rep` at ARR point `arr_index`.
std::uint64_t repetition_seed(std::uint64_t base_seed, std::size_t arr_index, std::size_t rep);

struct RepetitionRecord {
  std::string scenario;
  std::size_t arr_index = 0;
  double arr1 = 0.0;
  std::size_t rep = 0;
  methods::MethodId method = methods::MethodId::kOracle;
  std::optional<double> het_p;
  bool degenerate = false;
  std::optional<std::size_t> top_var;  // 0-based
  std::optional<std::vector<double>> importance;
  std::optional<double> accuracy;
  double fit_seconds = 0.0;
  std::string rule;
  std::string note;  // "error: ..." when the fit failed

  bool errored() const { return note.rfind("error:", 0) == 0; }
};

/// One repetition at one heterogeneity point for every method of the spec.
/// Deterministic in (spec, point, arr_index, rep) apart from fit_seconds.
std::vector<RepetitionRecord> run_repetition(const ScenarioSpec& spec, const dgp::HeterogeneityPoint& point,
                                             std::size_t arr_index, std::size_t rep,
                                             const methods::MethodOptions& opt = {});

struct AggregateRow {
  std::string scenario;
  double arr1 = 0.0;
  std::string method;
  std::string metric;  // rejection_rate, top_rank, average_precision, accuracy, fit_seconds
  metrics::Estimate estimate;
};

/// Aggregates by (scenario, arr1, method). The rejection rate counts every
/// record with a p-value; accuracy skips records without one. Ranking metrics
/// need importance vectors and the predictive set.
std::vector<AggregateRow> aggregate(const std::vector<RepetitionRecord>& records,
                                    const std::optional<std::vector<std::size_t>>& predictive, double alpha);

/// Throws ConfigError when SIDES or SeqBT are requested above p = 30 without `force`.
void check_method_budget(const ScenarioSpec& spec, bool force);

struct SeedEntry {
  std::size_t arr_index = 0;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
};

struct BenchmarkReport {
  std::vector<RepetitionRecord> records;  // sorted by (arr_index, rep, method)
  std::vector<AggregateRow> aggregates;
  std::vector<dgp::HeterogeneityPoint> points;
  std::vector<SeedEntry> seeds;
  std::uint64_t spec_hash = 0;
  double wall_seconds = 0.0;
  std::size_t errored = 0;
};

struct RunOptions {
  unsigned workers = 1;
  bool resume = false;  // reuse completed (arr, rep, method) rows from output_dir
  bool write_outputs = true;
  methods::MethodOptions method_options;
  /// Called after each finished repetition with (done, total).
  std::function<void(std::size_t, std::size_t)> progress;
};

/// Loads or computes the calibration curve of a spec. Throws ConfigError when
/// the file is missing and auto-calibration is off, or when its config hash
/// disagrees with the spec.
dgp::CalibrationCurve load_or_calibrate(const ScenarioSpec& spec, unsigned workers = 1);

/// Runs arr_grid x repetitions x methods; results do not depend on `workers`.
BenchmarkReport run_benchmark(const ScenarioSpec& spec, const dgp::CalibrationCurve& curve,
                              const RunOptions& options = {});

// Output files inside the spec's output directory.
inline constexpr const char* kRecordsFile = "records.csv";
inline constexpr const char* kImportanceFile = "importance.csv";
inline constexpr const char* kAggregateFile = "aggregate.csv";
inline constexpr const char* kMetadataFile = "metadata.json";

void write_records(const std::filesystem::path& path, const std::vector<RepetitionRecord>& records);
void write_importance(const std::filesystem::path& path, const std::vector<RepetitionRecord>& records);
/// Reads records and, when `importance_path` exists, attaches importance vectors.
std::vector<RepetitionRecord> read_records(const std::filesystem::path& path,
                                           const std::filesystem::path& importance_path = {});
void write_aggregate(const std::filesystem::path& path, const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> read_aggregate(const std::filesystem::path& path);

/// Wide table with one row per arr1 and one "mean ± half_width" column per
/// method, for one metric.
void write_metric_table(std::ostream& out, const std::vector<AggregateRow>& rows, const std::string& metric);

}  // namespace survhte::harness
