#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "survhte/common.hpp"
#include "survhte/dgp.hpp"
#include "survhte/trial_data.hpp"

namespace survhte::io {

/// Splits one CSV line; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

/// Quotes a field when it holds a comma, quote or newline.
std::string csv_field(const std::string& text);

/// Whole-file CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index of `name`; throws std::runtime_error when absent.
  std::size_t column(const std::string& name) const;
};

/// Throws std::runtime_error naming the file and line on ragged rows.
CsvTable read_csv(const std::filesystem::path& path);

/// Strict decimal parse of a whole field; throws std::invalid_argument.
double parse_double(const std::string& text);
std::uint64_t parse_uint(const std::string& text);

/// `beta,arr0,arr1` rows plus a JSON sidecar `<path>.json` holding
/// prevalence, mc_size, seed and config_hash.
void write_calibration(const std::filesystem::path& path, const dgp::CalibrationCurve& curve);
dgp::CalibrationCurve read_calibration(const std::filesystem::path& path);

/// Columns x1..xp,w,time,event[,true_g].
void write_trial(std::ostream& out, const TrialData& data);
void write_trial(const std::filesystem::path& path, const TrialData& data);
TrialData read_trial(const std::filesystem::path& path);

/// Numeric matrix with a header row (names ignored).
Matrix read_matrix(const std::filesystem::path& path);

}  // namespace survhte::io
