#include "survhte/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "survhte/did_test.hpp"
#include "survhte/io.hpp"
#include "survhte/rule.hpp"

namespace survhte::harness {

namespace fs = std::filesystem;
using methods::MethodId;

ConfigError::ConfigError(std::string source, std::size_t line, std::string field, const std::string& message)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) +
                         (field.empty() ? std::string() : ": " + field) + ": " + message),
      source_(std::move(source)),
      line_(line),
      field_(std::move(field)) {}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + v + "'");
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::size_t ScenarioSpec::train_size() const {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(generator.n)));
}

void ScenarioSpec::validate() const {
  auto fail = [&](const std::string& field, const std::string& msg) { throw ConfigError(id, 0, field, msg); };
  try {
    generator.validate();
  } catch (const std::invalid_argument& e) {
    fail("generator", e.what());
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction", "must lie strictly between 0 and 1");
  if (train_size() < 2 || generator.n - train_size() < 2) fail("train_fraction", "leaves fewer than two rows in a part");
  if (repetitions < 1) fail("repetitions", "must be at least 1");
  if (arr_points < 1) fail("arr_points", "must be at least 1");
  if (methods.empty()) fail("methods", "no method selected");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie strictly between 0 and 1");
  if (validation_size() < 1) fail("validation_n", "must be positive");
  if (auto_calibrate && calibration_mc_size == 0) fail("calibration_mc_size", "must be positive");
}

std::string ScenarioSpec::canonical_text() const {
  std::ostringstream o;
  o << "id=" << id << "\np=" << generator.p << "\ngamma=";
  for (Eigen::Index j = 0; j < generator.gamma.size(); ++j) o << (j ? "," : "") << format_double(generator.gamma[j]);
  o << "\nsubgroup=" << generator.subgroup.describe() << "\ncovariates="
    << (covariates_path.empty() ? "gaussian" : covariates_path) << "\ncensoring=";
  if (generator.censoring)
    o << "beta(" << format_double(generator.censoring->a) << "," << format_double(generator.censoring->b) << ")*"
      << format_double(generator.censoring->scale);
  else
    o << "none";
  o << "\nn=" << generator.n << "\nvalidation_n=" << validation_size() << "\ntrain_fraction="
    << format_double(train_fraction) << "\narr_points=" << arr_points << "\nrepetitions=" << repetitions
    << "\nmethods=";
  for (std::size_t k = 0; k < methods.size(); ++k) o << (k ? "," : "") << methods::method_name(methods[k]);
  o << "\nbase_seed=" << base_seed << "\nalpha=" << format_double(alpha) << "\ncalibration_hash="
    << generator.calibration_hash() << '\n';
  return o.str();
}

std::uint64_t ScenarioSpec::hash() const { return fnv1a(canonical_text()); }

ScenarioSpec parse_scenario(std::istream& in, const std::string& source_name, const fs::path& base_dir) {
  ScenarioSpec spec;
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source_name, lineno, "", "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(source_name, lineno, "", "empty key");
    if (!kv.emplace(key, std::make_pair(value, lineno)).second)
      throw ConfigError(source_name, lineno, key, "repeated key");
  }

  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  std::optional<std::string> gamma_text;
  std::string censoring = "none";
  double cens_a = 0.4, cens_b = 0.4, cens_scale = 20.0;
  std::size_t p = 0;
  for (const auto& [key, entry] : kv) {
    const auto& [v, ln] = entry;
    try {
      if (key == "id") spec.id = v;
      else if (key == "p") p = io::parse_uint(v);
      else if (key == "gamma") gamma_text = v;
      else if (key == "subgroup") spec.generator.subgroup = SubgroupDefinition::parse(v);
      else if (key == "covariates") spec.covariates_path = v == "gaussian" ? std::string() : v;
      else if (key == "censoring") censoring = v;
      else if (key == "censoring_a") cens_a = io::parse_double(v);
      else if (key == "censoring_b") cens_b = io::parse_double(v);
      else if (key == "censoring_scale") cens_scale = io::parse_double(v);
      else if (key == "n") spec.generator.n = io::parse_uint(v);
      else if (key == "validation_n") spec.validation_n = io::parse_uint(v);
      else if (key == "train_fraction") spec.train_fraction = io::parse_double(v);
      else if (key == "arr_points") spec.arr_points = io::parse_uint(v);
      else if (key == "repetitions") spec.repetitions = io::parse_uint(v);
      else if (key == "base_seed") spec.base_seed = io::parse_uint(v);
      else if (key == "alpha") spec.alpha = io::parse_double(v);
      else if (key == "output_dir") spec.output_dir = resolve(v);
      else if (key == "calibration") spec.calibration_path = resolve(v);
      else if (key == "auto_calibrate") spec.auto_calibrate = parse_bool(v);
      else if (key == "calibration_mc_size") spec.calibration_mc_size = io::parse_uint(v);
      else if (key == "calibration_seed") spec.calibration_seed = io::parse_uint(v);
      else if (key == "methods") {
        spec.methods.clear();
        if (v == "all") {
          spec.methods.assign(methods::kAllMethods.begin(), methods::kAllMethods.end());
        } else {
          for (const auto& name : split_list(v)) spec.methods.push_back(methods::parse_method(name));
        }
      } else {
        throw ConfigError(source_name, ln, key, "unknown key");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(source_name, ln, key, e.what());
    }
  }

  auto line_of = [&](const std::string& key) { return kv.count(key) ? kv.at(key).second : std::size_t{0}; };
  if (p == 0) throw ConfigError(source_name, line_of("p"), "p", "missing or zero dimension");
  spec.generator.p = p;
  if (!gamma_text || *gamma_text == "published") {
    try {
      spec.generator.gamma = dgp::prognostic_vector(p);
    } catch (const std::exception& e) {
      throw ConfigError(source_name, line_of("gamma"), "gamma", e.what());
    }
  } else if (*gamma_text == "zero") {
    spec.generator.gamma = Vector::Zero(static_cast<Eigen::Index>(p));
  } else {
    const auto items = split_list(*gamma_text);
    if (items.size() != p)
      throw ConfigError(source_name, line_of("gamma"), "gamma",
                        "has " + std::to_string(items.size()) + " entries but p is " + std::to_string(p));
    spec.generator.gamma.resize(static_cast<Eigen::Index>(p));
    try {
      for (std::size_t j = 0; j < p; ++j) spec.generator.gamma[static_cast<Eigen::Index>(j)] = io::parse_double(items[j]);
    } catch (const std::exception& e) {
      throw ConfigError(source_name, line_of("gamma"), "gamma", e.what());
    }
  }
  if (!kv.count("subgroup")) {
    if (p < 4) throw ConfigError(source_name, 0, "subgroup", "missing subgroup definition");
    spec.generator.subgroup = SubgroupDefinition::at_least({p - 4, p - 3, p - 2, p - 1});
  }
  try {
    spec.generator.subgroup.check_dimension(p);
  } catch (const std::exception& e) {
    throw ConfigError(source_name, line_of("subgroup"), "subgroup", e.what());
  }
  if (censoring == "beta") {
    spec.generator.censoring = dgp::BetaCensoring{cens_a, cens_b, cens_scale};
  } else if (censoring != "none") {
    throw ConfigError(source_name, line_of("censoring"), "censoring", "expected none or beta, got '" + censoring + "'");
  }
  if (!spec.covariates_path.empty()) {
    const fs::path path = resolve(spec.covariates_path);
    try {
      auto m = std::make_shared<const Matrix>(io::read_matrix(path));
      spec.generator.covariates = dgp::EmpiricalCovariates{std::move(m)};
    } catch (const std::exception& e) {
      throw ConfigError(source_name, line_of("covariates"), "covariates", e.what());
    }
    spec.covariates_path = path.string();
  }
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    const std::string prefix = e.source() + ": " + e.field() + ": ";
    throw ConfigError(source_name, line_of(e.field()), e.field(), std::string(e.what()).substr(prefix.size()));
  }
  return spec;
}

ScenarioSpec load_scenario(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "", "cannot open scenario file");
  return parse_scenario(in, path.string(), path.parent_path());
}

void check_method_budget(const ScenarioSpec& spec, bool force) {
  if (force || spec.generator.p <= 30) return;
  for (MethodId id : spec.methods)
    if (id == MethodId::kSides || id == MethodId::kSeqBT)
      throw ConfigError(spec.id, 0, "methods",
                        std::string(methods::method_name(id)) + " is limited to p <= 30; pass --force to run it");
}

// ---------------------------------------------------------------------------
// Repetitions

std::uint64_t repetition_seed(std::uint64_t base_seed, std::size_t arr_index, std::size_t rep) {
  return derive_seed(base_seed, {arr_index, rep});
}

namespace {

std::vector<RepetitionRecord> run_methods(const ScenarioSpec& spec, const dgp::HeterogeneityPoint& point,
                                          std::size_t arr_index, std::size_t rep,
                                          const std::vector<MethodId>& which, const methods::MethodOptions& opt) {
  const std::uint64_t seed = repetition_seed(spec.base_seed, arr_index, rep);
  const TrialData discovery = dgp::generate_trial(spec.generator, point, derive_seed(seed, {0}));
  dgp::GeneratorConfig vcfg = spec.generator;
  vcfg.n = spec.validation_size();
  const TrialData validation = dgp::generate_trial(vcfg, point, derive_seed(seed, {1}));
  const std::size_t cut = spec.train_size();
  const TrialData train = discovery.slice(0, cut);
  const TrialData test = discovery.slice(cut, discovery.n());

  std::vector<RepetitionRecord> out;
  for (MethodId id : which) {
    Rng rng(derive_seed(seed, {2, static_cast<std::uint64_t>(id)}));
    RepetitionRecord rec;
    rec.scenario = spec.id;
    rec.arr_index = arr_index;
    rec.arr1 = point.arr1_target;
    rec.rep = rep;
    rec.method = id;
    const bool predictive = methods::is_predictive(id);
    methods::MethodResult res =
        methods::fit_method(id, predictive ? train : discovery, rng, spec.generator.subgroup, opt);
    rec.fit_seconds = res.fit_seconds;
    rec.note = res.note;
    if (rec.errored()) {
      out.push_back(std::move(rec));
      continue;
    }
    // SIDES reports its own p-value from the search data.
    if (predictive && id != MethodId::kSides) {
      if (res.predictor) {
        const Flags groups = res.predictor->predict(test.covariates);
        const TestResult t = diff_in_diff_test(test, groups, rng);
        rec.het_p = t.p_value;
        rec.degenerate = t.degenerate;
      } else {
        rec.het_p = uniform_open(rng);
        rec.degenerate = true;
      }
    } else {
      rec.het_p = res.het_p;
      rec.degenerate = res.het_degenerate;
    }
    if (res.importance) {
      rec.top_var = methods::top_variable(*res.importance);
      rec.importance = std::move(res.importance);
    }
    if (res.predictor) {
      rec.accuracy = metrics::classification_accuracy(*res.predictor, validation);
      rec.rule = res.predictor->describe();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

bool record_less(const RepetitionRecord& a, const RepetitionRecord& b) {
  if (a.arr_index != b.arr_index) return a.arr_index < b.arr_index;
  if (a.rep != b.rep) return a.rep < b.rep;
  return static_cast<int>(a.method) < static_cast<int>(b.method);
}

}  // namespace

std::vector<RepetitionRecord> run_repetition(const ScenarioSpec& spec, const dgp::HeterogeneityPoint& point,
                                             std::size_t arr_index, std::size_t rep,
                                             const methods::MethodOptions& opt) {
  return run_methods(spec, point, arr_index, rep, spec.methods, opt);
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<AggregateRow> aggregate(const std::vector<RepetitionRecord>& records,
                                    const std::optional<std::vector<std::size_t>>& predictive, double alpha) {
  struct Cell {
    std::vector<double> p, top, ap, acc, secs;
  };
  using Key = std::tuple<std::string, double, int>;
  std::map<Key, Cell> cells;
  for (const auto& r : records) {
    Cell& c = cells[{r.scenario, r.arr1, static_cast<int>(r.method)}];
    c.secs.push_back(r.fit_seconds);
    if (r.het_p) c.p.push_back(*r.het_p);
    if (r.accuracy) c.acc.push_back(*r.accuracy);
    if (predictive && r.importance) {
      c.top.push_back(metrics::top_rank_hit(*r.importance, *predictive) ? 1.0 : 0.0);
      std::vector<std::uint8_t> labels(r.importance->size(), 0);
      for (std::size_t j : *predictive)
        if (j < labels.size()) labels[j] = 1;
      c.ap.push_back(metrics::average_precision(*r.importance, labels));
    }
  }
  std::vector<AggregateRow> rows;
  for (const auto& [key, c] : cells) {
    auto add = [&](const std::string& metric, const metrics::Estimate& e) {
      rows.push_back({std::get<0>(key), std::get<1>(key),
                      std::string(methods::method_name(static_cast<MethodId>(std::get<2>(key)))), metric, e});
    };
    if (!c.p.empty()) add("rejection_rate", metrics::rejection_rate(c.p, alpha));
    if (!c.top.empty()) add("top_rank", metrics::proportion(c.top));
    if (!c.ap.empty()) add("average_precision", metrics::mean_estimate(c.ap));
    if (!c.acc.empty()) add("accuracy", metrics::mean_estimate(c.acc));
    add("fit_seconds", metrics::mean_estimate(c.secs));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Files

namespace {

std::string opt_num(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_record_rows(std::ostream& out, const std::vector<RepetitionRecord>& records) {
  for (const auto& r : records) {
    out << io::csv_field(r.scenario) << ',' << format_double(r.arr1) << ',' << r.rep << ','
        << methods::method_name(r.method) << ',' << opt_num(r.het_p) << ',' << (r.degenerate ? 1 : 0) << ','
        << (r.top_var ? std::to_string(*r.top_var + 1) : std::string()) << ',' << opt_num(r.accuracy) << ','
        << format_double(r.fit_seconds) << ',' << io::csv_field(r.rule) << ',' << io::csv_field(r.note) << '\n';
  }
}

void write_importance_rows(std::ostream& out, const std::vector<RepetitionRecord>& records) {
  for (const auto& r : records) {
    if (!r.importance) continue;
    for (std::size_t j = 0; j < r.importance->size(); ++j)
      out << io::csv_field(r.scenario) << ',' << format_double(r.arr1) << ',' << r.rep << ','
          << methods::method_name(r.method) << ',' << j + 1 << ',' << format_double((*r.importance)[j]) << '\n';
  }
}

constexpr const char* kRecordsHeader = "scenario,arr1,rep,method,het_p,degenerate,top_var,accuracy,fit_seconds,rule,note\n";
constexpr const char* kImportanceHeader = "scenario,arr1,rep,method,var_index,score\n";

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::out | mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

void write_records(const fs::path& path, const std::vector<RepetitionRecord>& records) {
  std::ofstream out = open_out(path);
  out << kRecordsHeader;
  write_record_rows(out, records);
}

void write_importance(const fs::path& path, const std::vector<RepetitionRecord>& records) {
  std::ofstream out = open_out(path);
  out << kImportanceHeader;
  write_importance_rows(out, records);
}

std::vector<RepetitionRecord> read_records(const fs::path& path, const fs::path& importance_path) {
  const io::CsvTable t = io::read_csv(path);
  const std::size_t c_sc = t.column("scenario"), c_arr = t.column("arr1"), c_rep = t.column("rep"),
                    c_m = t.column("method"), c_p = t.column("het_p"), c_deg = t.column("degenerate"),
                    c_top = t.column("top_var"), c_acc = t.column("accuracy"), c_sec = t.column("fit_seconds"),
                    c_rule = t.column("rule");
  const auto note_it = std::find(t.header.begin(), t.header.end(), "note");
  std::vector<RepetitionRecord> out;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::size_t> index;
  for (const auto& row : t.rows) {
    RepetitionRecord r;
    r.scenario = row[c_sc];
    r.arr1 = io::parse_double(row[c_arr]);
    r.rep = io::parse_uint(row[c_rep]);
    r.method = methods::parse_method(row[c_m]);
    if (!row[c_p].empty()) r.het_p = io::parse_double(row[c_p]);
    r.degenerate = row[c_deg] == "1";
    if (!row[c_top].empty()) r.top_var = io::parse_uint(row[c_top]) - 1;
    if (!row[c_acc].empty()) r.accuracy = io::parse_double(row[c_acc]);
    r.fit_seconds = io::parse_double(row[c_sec]);
    r.rule = row[c_rule];
    if (note_it != t.header.end()) r.note = row[static_cast<std::size_t>(note_it - t.header.begin())];
    index[{row[c_sc], row[c_arr], row[c_rep], row[c_m]}] = out.size();
    out.push_back(std::move(r));
  }
  if (!importance_path.empty() && fs::exists(importance_path)) {
    const io::CsvTable imp = io::read_csv(importance_path);
    const std::size_t i_sc = imp.column("scenario"), i_arr = imp.column("arr1"), i_rep = imp.column("rep"),
                      i_m = imp.column("method"), i_var = imp.column("var_index"), i_score = imp.column("score");
    for (const auto& row : imp.rows) {
      auto it = index.find({row[i_sc], row[i_arr], row[i_rep], row[i_m]});
      if (it == index.end()) continue;
      auto& vec = out[it->second].importance;
      if (!vec) vec.emplace();
      const std::size_t j = io::parse_uint(row[i_var]) - 1;
      if (vec->size() <= j) vec->resize(j + 1, 0.0);
      (*vec)[j] = io::parse_double(row[i_score]);
    }
  }
  return out;
}

void write_aggregate(const fs::path& path, const std::vector<AggregateRow>& rows) {
  std::ofstream out = open_out(path);
  out << "scenario,arr1,method,metric,mean,half_width,count\n";
  for (const auto& r : rows)
    out << io::csv_field(r.scenario) << ',' << format_double(r.arr1) << ',' << r.method << ',' << r.metric << ','
        << format_double(r.estimate.mean) << ',' << format_double(r.estimate.half_width) << ',' << r.estimate.count
        << '\n';
}

std::vector<AggregateRow> read_aggregate(const fs::path& path) {
  const io::CsvTable t = io::read_csv(path);
  std::vector<AggregateRow> rows;
  for (const auto& row : t.rows) {
    AggregateRow r;
    r.scenario = row[t.column("scenario")];
    r.arr1 = io::parse_double(row[t.column("arr1")]);
    r.method = row[t.column("method")];
    r.metric = row[t.column("metric")];
    r.estimate.mean = io::parse_double(row[t.column("mean")]);
    r.estimate.half_width = io::parse_double(row[t.column("half_width")]);
    r.estimate.count = io::parse_uint(row[t.column("count")]);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_metric_table(std::ostream& out, const std::vector<AggregateRow>& rows, const std::string& metric) {
  std::vector<std::string> method_cols;
  std::map<double, std::map<std::string, const AggregateRow*>> grid;
  for (const auto& r : rows) {
    if (r.metric != metric) continue;
    if (std::find(method_cols.begin(), method_cols.end(), r.method) == method_cols.end()) method_cols.push_back(r.method);
    grid[r.arr1][r.method] = &r;
  }
  std::sort(method_cols.begin(), method_cols.end(), [](const std::string& a, const std::string& b) {
    return static_cast<int>(methods::parse_method(a)) < static_cast<int>(methods::parse_method(b));
  });
  out << "arr1";
  for (const auto& m : method_cols) out << ',' << m;
  out << '\n';
  char buf[64];
  for (const auto& [arr1, by_method] : grid) {
    std::snprintf(buf, sizeof(buf), "%.3f", arr1);
    out << buf;
    for (const auto& m : method_cols) {
      out << ',';
      auto it = by_method.find(m);
      if (it == by_method.end()) continue;
      std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", it->second->estimate.mean, it->second->estimate.half_width);
      out << buf;
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Benchmark

dgp::CalibrationCurve load_or_calibrate(const ScenarioSpec& spec, unsigned workers) {
  const std::uint64_t expected = spec.generator.calibration_hash();
  if (!spec.calibration_path.empty() && fs::exists(spec.calibration_path)) {
    dgp::CalibrationCurve curve = io::read_calibration(spec.calibration_path);
    if (curve.config_hash != expected)
      throw ConfigError(spec.id, 0, "calibration",
                        spec.calibration_path.string() + " was computed for a different generator configuration");
    return curve;
  }
  if (!spec.auto_calibrate)
    throw ConfigError(spec.id, 0, "calibration",
                      (spec.calibration_path.empty() ? std::string("no calibration file")
                                                     : "missing " + spec.calibration_path.string()) +
                          " and auto_calibrate is off");
  dgp::CalibrationCurve curve =
      dgp::calibrate(spec.generator, dgp::beta_grid(), spec.calibration_mc_size, spec.calibration_seed, workers);
  if (!spec.calibration_path.empty()) io::write_calibration(spec.calibration_path, curve);
  return curve;
}

namespace {

void write_metadata(const fs::path& path, const ScenarioSpec& spec, const dgp::CalibrationCurve& curve,
                    const BenchmarkReport& report, unsigned workers) {
  nlohmann::json meta;
  meta["scenario"] = spec.id;
  meta["spec_hash"] = report.spec_hash;
  meta["spec"] = spec.canonical_text();
  meta["p"] = spec.generator.p;
  meta["predictive_variables"] = nlohmann::json::array();
  for (std::size_t j : spec.predictive_variables()) meta["predictive_variables"].push_back(j + 1);
  meta["alpha"] = spec.alpha;
  meta["workers"] = workers;
  meta["wall_seconds"] = report.wall_seconds;
  meta["errored_records"] = report.errored;
  meta["calibration"] = {{"path", spec.calibration_path.string()},
                         {"config_hash", curve.config_hash},
                         {"mc_size", curve.mc_size},
                         {"seed", curve.seed},
                         {"prevalence", curve.prevalence}};
  meta["seed_scheme"] =
      "rep_seed = derive_seed(base_seed, {arr_index, rep}); discovery derive_seed(rep_seed, {0}); "
      "validation derive_seed(rep_seed, {1}); method rng derive_seed(rep_seed, {2, method_id})";
  meta["base_seed"] = spec.base_seed;
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t k = 0; k < report.points.size(); ++k) {
    const auto& pt = report.points[k];
    points.push_back({{"arr_index", k},
                      {"arr1", pt.arr1_target},
                      {"arr0", pt.arr0_target},
                      {"beta1", pt.beta1},
                      {"beta0", pt.beta0}});
  }
  meta["points"] = points;
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : report.seeds) seeds.push_back({{"arr_index", s.arr_index}, {"rep", s.rep}, {"seed", s.seed}});
  meta["seeds"] = seeds;
  std::ofstream out = open_out(path);
  out << meta.dump(1) << '\n';
}

}  // namespace

BenchmarkReport run_benchmark(const ScenarioSpec& spec, const dgp::CalibrationCurve& curve, const RunOptions& options) {
  spec.validate();
  if (curve.config_hash != spec.generator.calibration_hash())
    throw ConfigError(spec.id, 0, "calibration", "curve was computed for a different generator configuration");
  const auto start = std::chrono::steady_clock::now();
  BenchmarkReport report;
  report.spec_hash = spec.hash();
  report.points = dgp::arr_grid(curve, spec.arr_points);

  struct Task {
    std::size_t arr_index, rep;
    std::vector<MethodId> todo;
  };
  std::vector<RepetitionRecord> kept;
  std::set<std::tuple<std::size_t, std::size_t, int>> done;
  const fs::path records_path = spec.output_dir / kRecordsFile;
  const fs::path importance_path = spec.output_dir / kImportanceFile;
  if (options.resume && fs::exists(records_path)) {
    for (auto& r : read_records(records_path, importance_path)) {
      if (r.scenario != spec.id) continue;
      auto k = std::find_if(report.points.begin(), report.points.end(),
                            [&](const dgp::HeterogeneityPoint& pt) { return pt.arr1_target == r.arr1; });
      if (k == report.points.end() || r.rep >= spec.repetitions) continue;
      if (std::find(spec.methods.begin(), spec.methods.end(), r.method) == spec.methods.end()) continue;
      r.arr_index = static_cast<std::size_t>(k - report.points.begin());
      if (!done.insert({r.arr_index, r.rep, static_cast<int>(r.method)}).second) continue;
      kept.push_back(std::move(r));
    }
  }
  std::vector<Task> tasks;
  for (std::size_t k = 0; k < report.points.size(); ++k) {
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      report.seeds.push_back({k, rep, repetition_seed(spec.base_seed, k, rep)});
      Task t{k, rep, {}};
      for (MethodId id : spec.methods)
        if (!done.count({k, rep, static_cast<int>(id)})) t.todo.push_back(id);
      if (!t.todo.empty()) tasks.push_back(std::move(t));
    }
  }

  // Finished repetitions are appended as they complete so an interrupted run can resume.
  std::ofstream rec_out, imp_out;
  if (options.write_outputs) {
    const bool append = options.resume && fs::exists(records_path);
    if (append) {
      // Rewrite the kept rows first so partial or foreign rows do not linger.
      write_records(records_path, kept);
      write_importance(importance_path, kept);
    }
    rec_out = open_out(records_path, append ? std::ios::app : std::ios::trunc);
    imp_out = open_out(importance_path, append ? std::ios::app : std::ios::trunc);
    if (!append) {
      rec_out << kRecordsHeader << std::flush;
      imp_out << kImportanceHeader << std::flush;
    }
  }

  std::vector<std::vector<RepetitionRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::size_t finished = 0;
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const Task& t = tasks[i];
        results[i] = run_methods(spec, report.points[t.arr_index], t.arr_index, t.rep, t.todo, options.method_options);
        std::lock_guard<std::mutex> lock(mu);
        if (options.write_outputs) {
          write_record_rows(rec_out, results[i]);
          write_importance_rows(imp_out, results[i]);
          rec_out.flush();
          imp_out.flush();
        }
        ++finished;
        if (options.progress) options.progress(finished, tasks.size());
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        next = tasks.size();
        return;
      }
    }
  };
  const unsigned workers = std::max(1u, options.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  report.records = std::move(kept);
  for (auto& chunk : results)
    for (auto& r : chunk) report.records.push_back(std::move(r));
  std::sort(report.records.begin(), report.records.end(), record_less);
  report.errored = static_cast<std::size_t>(
      std::count_if(report.records.begin(), report.records.end(), [](const RepetitionRecord& r) { return r.errored(); }));
  report.aggregates = aggregate(report.records, spec.predictive_variables(), spec.alpha);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (options.write_outputs) {
    rec_out.close();
    imp_out.close();
    write_records(records_path, report.records);
    write_importance(importance_path, report.records);
    write_aggregate(spec.output_dir / kAggregateFile, report.aggregates);
    for (const char* metric : {"rejection_rate", "average_precision", "accuracy"}) {
      std::ofstream table = open_out(spec.output_dir / (std::string("table_") + metric + ".csv"));
      write_metric_table(table, report.aggregates, metric);
    }
    write_metadata(spec.output_dir / kMetadataFile, spec, curve, report, workers);
  }
  return report;
}

}  // namespace survhte::harness
