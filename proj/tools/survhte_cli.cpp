// Command-line harness: calibrate, generate, run, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "survhte/dgp.hpp"
#include "survhte/harness.hpp"
#include "survhte/io.hpp"

namespace fs = std::filesystem;
using namespace survhte;

namespace {

constexpr int kConfigError = 2;
constexpr int kMethodFailures = 3;

int cmd_calibrate(const fs::path& scenario, std::size_t grid_points, std::size_t mc_n, std::optional<std::uint64_t> seed,
                  const fs::path& out, unsigned workers) {
  harness::ScenarioSpec spec = harness::load_scenario(scenario);
  const std::uint64_t s = seed.value_or(spec.calibration_seed);
  const auto curve = dgp::calibrate(spec.generator, dgp::beta_grid(grid_points), mc_n, s, workers);
  io::write_calibration(out, curve);
  std::cout << "calibration written to " << out.string() << " (prevalence " << curve.prevalence
            << ", max null ARR1 " << dgp::max_null_arr1(curve) << ")\n";
  return 0;
}

int cmd_generate(const fs::path& scenario, const fs::path& calibration, double arr1, std::uint64_t seed,
                 std::optional<std::size_t> n, const fs::path& out) {
  harness::ScenarioSpec spec = harness::load_scenario(scenario);
  if (!calibration.empty()) spec.calibration_path = calibration;
  const auto curve = harness::load_or_calibrate(spec);
  if (n) spec.generator.n = *n;
  const auto point = dgp::heterogeneity_point(curve, arr1);
  io::write_trial(out, dgp::generate_trial(spec.generator, point, seed));
  std::cout << "beta1 " << point.beta1 << " beta0 " << point.beta0 << " arr0 " << point.arr0_target << '\n';
  return 0;
}

int cmd_run(const fs::path& scenario, const fs::path& calibration, std::optional<std::size_t> reps,
            std::optional<std::size_t> arr_points, unsigned workers, const fs::path& out_dir, bool resume, bool force,
            bool quiet) {
  harness::ScenarioSpec spec = harness::load_scenario(scenario);
  if (!calibration.empty()) spec.calibration_path = calibration;
  if (reps) spec.repetitions = *reps;
  if (arr_points) spec.arr_points = *arr_points;
  if (!out_dir.empty()) spec.output_dir = out_dir;
  spec.validate();
  harness::check_method_budget(spec, force);
  const auto curve = harness::load_or_calibrate(spec, workers);
  harness::RunOptions opt;
  opt.workers = workers;
  opt.resume = resume;
  if (!quiet)
    opt.progress = [](std::size_t done, std::size_t total) {
      std::fprintf(stderr, "\r%zu/%zu repetitions", done, total);
      if (done == total) std::fputc('\n', stderr);
    };
  const auto report = harness::run_benchmark(spec, curve, opt);
  std::cout << report.records.size() << " records in " << spec.output_dir.string() << " (" << report.wall_seconds
            << " s)\n";
  if (report.errored * 10 > report.records.size()) {
    std::cerr << report.errored << " of " << report.records.size() << " records errored\n";
    return kMethodFailures;
  }
  return 0;
}

int cmd_report(const fs::path& records, const fs::path& out, const fs::path& scenario, std::optional<double> alpha,
               const fs::path& tables_dir) {
  std::optional<std::vector<std::size_t>> predictive;
  double a = 0.05;
  if (!scenario.empty()) {
    const auto spec = harness::load_scenario(scenario);
    predictive = spec.predictive_variables();
    a = spec.alpha;
  } else if (const fs::path meta_path = records.parent_path() / harness::kMetadataFile; fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    const auto meta = nlohmann::json::parse(in);
    predictive.emplace();
    for (std::size_t j : meta.at("predictive_variables")) predictive->push_back(j - 1);
    a = meta.at("alpha").get<double>();
  }
  if (alpha) a = *alpha;
  const fs::path importance = records.parent_path() / harness::kImportanceFile;
  const auto recs = harness::read_records(records, importance);
  const auto rows = harness::aggregate(recs, predictive, a);
  harness::write_aggregate(out, rows);
  if (!tables_dir.empty()) {
    fs::create_directories(tables_dir);
    for (const char* metric : {"rejection_rate", "average_precision", "accuracy"}) {
      std::ofstream table(tables_dir / (std::string("table_") + metric + ".csv"));
      harness::write_metric_table(table, rows, metric);
    }
  }
  std::cout << rows.size() << " aggregate rows written to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subgroup analysis benchmark for time-to-event trials"};
  app.require_subcommand(1);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());

  fs::path scenario, calibration, out, out_dir, records, tables_dir;
  std::size_t grid_points = 201, mc_n = 1000000;
  std::optional<std::uint64_t> cal_seed;
  std::uint64_t seed = 1;
  double arr1 = 0.0;
  std::optional<std::size_t> gen_n, reps, arr_points;
  std::optional<double> alpha;
  unsigned workers = hw;
  bool resume = false, force = false, quiet = false;

  auto* cal = app.add_subcommand("calibrate", "Monte-Carlo ARR calibration curves");
  cal->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  cal->add_option("--grid-points", grid_points, "Beta grid size on [-10, 10]")->check(CLI::Range(2, 100000));
  cal->add_option("--mc-n", mc_n, "Monte-Carlo sample size")->check(CLI::PositiveNumber);
  cal->add_option("--seed", cal_seed, "Calibration seed (default: scenario calibration_seed)");
  cal->add_option("--workers", workers, "Worker threads");
  cal->add_option("--out", out, "Calibration CSV")->required();

  auto* gen = app.add_subcommand("generate", "Simulate one trial at a heterogeneity level");
  gen->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  gen->add_option("--calibration", calibration, "Calibration CSV (default: scenario setting)");
  gen->add_option("--arr1", arr1, "Target ARR at t=1 in the good-responder subgroup")->required();
  gen->add_option("--seed", seed, "Trial seed");
  gen->add_option("--n", gen_n, "Sample size (default: scenario n)");
  gen->add_option("--out", out, "Trial CSV")->required();

  auto* run = app.add_subcommand("run", "Run the benchmark grid");
  run->add_option("--scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--calibration", calibration, "Calibration CSV (default: scenario setting)");
  run->add_option("--reps", reps, "Repetitions per ARR point");
  run->add_option("--arr-points", arr_points, "Number of ARR points");
  run->add_option("--workers", workers, "Worker threads");
  run->add_option("--out-dir", out_dir, "Output directory (default: scenario output_dir)");
  run->add_flag("--resume", resume, "Keep completed (arr, rep, method) rows and run the rest");
  run->add_flag("--force", force, "Allow SIDES and SeqBT above p = 30");
  run->add_flag("--quiet", quiet, "No progress line");

  auto* rep = app.add_subcommand("report", "Aggregate a records file");
  rep->add_option("--records", records, "Records CSV")->required()->check(CLI::ExistingFile);
  rep->add_option("--out", out, "Aggregate CSV")->required();
  rep->add_option("--scenario", scenario, "Scenario file for the predictive set (default: sibling metadata.json)");
  rep->add_option("--alpha", alpha, "Significance level");
  rep->add_option("--tables-dir", tables_dir, "Also write wide per-metric tables here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*cal) return cmd_calibrate(scenario, grid_points, mc_n, cal_seed, out, workers);
    if (*gen) return cmd_generate(scenario, calibration, arr1, seed, gen_n, out);
    if (*run) return cmd_run(scenario, calibration, reps, arr_points, workers, out_dir, resume, force, quiet);
    if (*rep) return cmd_report(records, out, scenario, alpha, tables_dir);
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
