#include "survhte/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "survhte/rule.hpp"

namespace survhte::io {

namespace fs = std::filesystem;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(std::move(field));
  return out;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == name) return j;
  throw std::runtime_error("missing CSV column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(t.header.size()) + " fields, found " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw std::runtime_error(path.string() + ": empty CSV file");
  return t;
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end) throw std::invalid_argument("not a number: '" + text + "'");
  return v;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto r = std::from_chars(text.data(), end, v);
  if (text.empty() || r.ec != std::errc() || r.ptr != end)
    throw std::invalid_argument("not a nonnegative integer: '" + text + "'");
  return v;
}

namespace {

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".json"); }

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::uint8_t parse_flag(const std::string& text) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  throw std::invalid_argument("not a 0/1 flag: '" + text + "'");
}

}  // namespace

void write_calibration(const fs::path& path, const dgp::CalibrationCurve& curve) {
  std::ofstream out = open_out(path);
  out << "beta,arr0,arr1\n";
  for (std::size_t k = 0; k < curve.beta_grid.size(); ++k)
    out << format_double(curve.beta_grid[k]) << ',' << format_double(curve.arr0[k]) << ','
        << format_double(curve.arr1[k]) << '\n';
  nlohmann::json meta = {{"prevalence", curve.prevalence},
                         {"mc_size", curve.mc_size},
                         {"seed", curve.seed},
                         {"config_hash", curve.config_hash}};
  std::ofstream side = open_out(sidecar(path));
  side << meta.dump(2) << '\n';
}

dgp::CalibrationCurve read_calibration(const fs::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cb = t.column("beta"), c0 = t.column("arr0"), c1 = t.column("arr1");
  dgp::CalibrationCurve curve;
  for (const auto& row : t.rows) {
    curve.beta_grid.push_back(parse_double(row[cb]));
    curve.arr0.push_back(parse_double(row[c0]));
    curve.arr1.push_back(parse_double(row[c1]));
  }
  std::ifstream side(sidecar(path));
  if (!side) throw std::runtime_error("missing calibration sidecar " + sidecar(path).string());
  const nlohmann::json meta = nlohmann::json::parse(side);
  curve.prevalence = meta.at("prevalence").get<double>();
  curve.mc_size = meta.at("mc_size").get<std::size_t>();
  curve.seed = meta.at("seed").get<std::uint64_t>();
  curve.config_hash = meta.at("config_hash").get<std::uint64_t>();
  return curve;
}

void write_trial(std::ostream& out, const TrialData& data) {
  const std::size_t p = data.p();
  for (std::size_t j = 0; j < p; ++j) out << 'x' << j + 1 << ',';
  out << "w,time,event";
  if (data.true_subgroup) out << ",true_g";
  out << '\n';
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (double v : data.row(i)) out << format_double(v) << ',';
    out << int(data.treatment[i]) << ',' << format_double(data.time[i]) << ',' << int(data.event[i]);
    if (data.true_subgroup) out << ',' << int((*data.true_subgroup)[i]);
    out << '\n';
  }
}

void write_trial(const fs::path& path, const TrialData& data) {
  std::ofstream out = open_out(path);
  write_trial(out, data);
}

TrialData read_trial(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::size_t p = 0;
  while (p < t.header.size() && t.header[p] == "x" + std::to_string(p + 1)) ++p;
  const std::size_t cw = t.column("w"), ct = t.column("time"), ce = t.column("event");
  const bool labelled = std::find(t.header.begin(), t.header.end(), "true_g") != t.header.end();
  const std::size_t n = t.rows.size();
  TrialData d;
  d.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  if (labelled) d.true_subgroup.emplace();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = t.rows[i];
    for (std::size_t j = 0; j < p; ++j)
      d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(row[j]);
    d.treatment.push_back(parse_flag(row[cw]));
    d.time.push_back(parse_double(row[ct]));
    d.event.push_back(parse_flag(row[ce]));
    if (labelled) d.true_subgroup->push_back(parse_flag(row[t.column("true_g")]));
  }
  d.validate();
  return d;
}

Matrix read_matrix(const fs::path& path) {
  const CsvTable t = read_csv(path);
  Matrix m(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = parse_double(t.rows[i][j]);
  return m;
}

}  // namespace survhte::io
