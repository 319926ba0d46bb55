// End-to-end acceptance run: one PASS/FAIL line per criterion, plus INFO
// lines. Exit status is nonzero when any criterion fails.
//
//   survhte_acceptance [output_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "survhte/dgp.hpp"
#include "survhte/harness.hpp"
#include "survhte/methods.hpp"
#include "survhte/metrics.hpp"
#include "survhte/survival.hpp"

using namespace survhte;
using methods::MethodId;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCalibrationN = 100000;

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
    pass = pass && ok;
  }
};

int failures = 0;

void report(int id, const char* title, const Verdict& v) {
  std::printf("C%-2d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", title, v.detail.c_str());
  std::fflush(stdout);
  failures += !v.pass;
}

void info(const std::string& text) {
  std::printf("    INFO %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string name(MethodId id) { return std::string(methods::method_name(id)); }

std::string interval(double v, double lo, double hi) {
  return fmt("%.3f", v) + " in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "]";
}

harness::ScenarioSpec load(const char* file, const fs::path& out) {
  harness::ScenarioSpec s = harness::load_scenario(fs::path(SURVHTE_SOURCE_DIR) / "scenarios" / file);
  s.output_dir = out / s.id;
  return s;
}

dgp::CalibrationCurve calibrate(const harness::ScenarioSpec& s, unsigned workers) {
  return dgp::calibrate(s.generator, dgp::beta_grid(), kCalibrationN, s.calibration_seed, workers);
}

struct Table {
  std::map<std::tuple<double, std::string, std::string>, metrics::Estimate> cells;

  explicit Table(const std::vector<harness::AggregateRow>& rows) {
    for (const auto& r : rows) cells[{r.arr1, r.method, r.metric}] = r.estimate;
  }
  std::optional<metrics::Estimate> get(double arr1, MethodId m, const std::string& metric) const {
    auto it = cells.find({arr1, name(m), metric});
    if (it == cells.end()) return std::nullopt;
    return it->second;
  }
  double mean(double arr1, MethodId m, const std::string& metric) const {
    auto e = get(arr1, m, metric);
    return e ? e->mean : std::nan("");
  }
};

harness::BenchmarkReport run(const harness::ScenarioSpec& spec, const dgp::CalibrationCurve& curve, unsigned workers,
                             const char* label) {
  harness::RunOptions opt;
  opt.workers = workers;
  const auto t0 = std::chrono::steady_clock::now();
  auto rep = harness::run_benchmark(spec, curve, opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  info(std::string(label) + ": " + std::to_string(rep.records.size()) + " records, " + fmt("%.0f", secs) + " s, " +
       std::to_string(rep.errored) + " errored, outputs in " + spec.output_dir.string());
  return rep;
}

// Largest decrease between consecutive grid points of a method's power curve.
double worst_drop(const Table& t, const std::vector<dgp::HeterogeneityPoint>& pts, MethodId m) {
  double worst = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    worst = std::max(worst, t.mean(pts[k - 1].arr1_target, m, "rejection_rate") -
                                t.mean(pts[k].arr1_target, m, "rejection_rate"));
  return worst;
}

double ap_by_cuts(const std::vector<double>& score, const Flags& labels) {
  std::vector<std::size_t> rank(score.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(),
            [&](std::size_t a, std::size_t b) { return score[a] != score[b] ? score[a] > score[b] : a < b; });
  const double pos = static_cast<double>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  double area = 0.0, prev = 0.0, tp = 0.0;
  for (std::size_t k = 0; k < rank.size(); ++k) {
    tp += labels[rank[k]];
    area += (tp / pos - prev) * tp / static_cast<double>(k + 1);
    prev = tp / pos;
  }
  return area;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_results");
  const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  info("workers " + std::to_string(workers) + ", outputs under " + out.string());

  const harness::ScenarioSpec desk = load("desk_p20.txt", out);
  const harness::ScenarioSpec cens = load("desk_p20_censored.txt", out);
  const dgp::CalibrationCurve curve = calibrate(desk, workers);
  const auto points = dgp::arr_grid(curve, desk.arr_points);
  const double top_arr = points.back().arr1_target;

  // 1. Calibration
  {
    Verdict v;
    const double tol = 3.0 / std::sqrt(static_cast<double>(kCalibrationN));
    std::size_t zero = 0;
    for (std::size_t k = 1; k < curve.beta_grid.size(); ++k)
      if (std::abs(curve.beta_grid[k]) < std::abs(curve.beta_grid[zero])) zero = k;
    v.check(curve.beta_grid[zero] == 0.0, "beta grid contains 0");
    v.check(std::abs(curve.arr0[zero]) <= tol, "|ARR0(0)| " + fmt("%.2e", std::abs(curve.arr0[zero])) + " <= " + fmt("%.2e", tol));
    v.check(std::abs(curve.arr1[zero]) <= tol, "|ARR1(0)| " + fmt("%.2e", std::abs(curve.arr1[zero])) + " <= " + fmt("%.2e", tol));
    v.check(dgp::is_nonincreasing(curve.arr0, tol) && dgp::is_nonincreasing(curve.arr1, tol), "isotonic within MC noise");
    v.check(top_arr >= 0.40 && top_arr <= 0.47, "top ARR1 grid point " + interval(top_arr, 0.40, 0.47));
    report(1, "calibration", v);
    info("supremum of constrained ARR1 " + fmt("%.4f", dgp::max_null_arr1(curve)) + ", prevalence " +
         fmt("%.4f", curve.prevalence));
  }

  // 2. Sampling law
  {
    Verdict v;
    Rng rng(derive_seed(desk.base_seed, {77}));
    const std::size_t draws = 1000000;
    std::size_t alive = 0;
    for (std::size_t i = 0; i < draws; ++i) alive += dgp::sample_event_time(0.0, rng) >= 1.0;
    const double s = static_cast<double>(alive) / draws;
    v.check(std::abs(s - std::exp(-0.5)) <= 0.002, "S(1) " + fmt("%.4f", s) + " vs 0.6065 +- 0.002");
    report(2, "sampling", v);
  }

  // 3. Null constraint
  {
    Verdict v;
    dgp::GeneratorConfig big = desk.generator;
    big.n = 100000;
    const double tol = 3.0 / std::sqrt(static_cast<double>(big.n));
    double worst = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const TrialData d = dgp::generate_trial(big, points[k], derive_seed(desk.base_seed, {33, k}));
      double sum = 0.0;
      for (std::size_t i = 0; i < d.n(); ++i)
        sum += dgp::individual_arr(d.row(i), points[k].beta0, points[k].beta1, big.gamma, big.subgroup);
      worst = std::max(worst, std::abs(sum / static_cast<double>(d.n())));
    }
    v.check(worst <= tol, "max |mean ARR| over " + std::to_string(points.size()) + " points " + fmt("%.4f", worst) +
                              " <= " + fmt("%.4f", tol));
    report(3, "null constraint", v);
  }

  // 4. Event rates
  {
    Verdict v;
    const auto pt = dgp::heterogeneity_point(curve, 0.2);
    dgp::GeneratorConfig g = desk.generator;
    g.n = 100000;
    const std::array<std::tuple<double, double, double>, 3> scenarios{{{0.4, 0.4, 0.77}, {0.3, 1.0, -1}, {0.2, 2.0, 0.36}}};
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      const auto [a, b, target] = scenarios[s];
      g.censoring = dgp::BetaCensoring{a, b, 20.0};
      const TrialData d = dgp::generate_trial(g, pt, derive_seed(desk.base_seed, {44, s}));
      const double rate = static_cast<double>(d.event_count()) / static_cast<double>(d.n());
      const std::string label = "Beta(" + fmt("%.1f", a) + "," + fmt("%.1f", b) + ") ";
      if (target < 0)
        info("event rate " + label + fmt("%.3f", rate));
      else
        v.check(std::abs(rate - target) <= 0.03, label + interval(rate, target - 0.03, target + 0.03));
    }
    report(4, "censoring event rates", v);
  }

  // 5. Type I error, censoring scenario 1, R = 1000
  harness::ScenarioSpec null_spec = cens;
  null_spec.arr_points = 1;
  null_spec.repetitions = 1000;
  const auto null_run = run(null_spec, curve, workers, "type I run");
  const Table null_table(null_run.aggregates);
  {
    Verdict v;
    const std::vector<std::tuple<MethodId, double, double>> bands{
        {MethodId::kUnivariateInteraction, 0.0, 0.05}, {MethodId::kITree, 0.0, 0.05},
        {MethodId::kUnivariateTTest, 0.02, 0.09},      {MethodId::kMultivariateCox, 0.02, 0.09},
        {MethodId::kMob, 0.02, 0.09},                  {MethodId::kSeqBT, 0.02, 0.09},
        {MethodId::kArdp, 0.02, 0.09},                 {MethodId::kMultivariateTree, 0.035, 0.065},
        {MethodId::kSides, 0.08, 1.0}};
    for (const auto& [m, lo, hi] : bands) {
      const auto e = null_table.get(0.0, m, "rejection_rate");
      v.check(e && e->mean >= lo && e->mean <= hi, name(m) + " " + interval(e ? e->mean : std::nan(""), lo, hi));
    }
    report(5, "type I error (R=1000, censoring 1)", v);
    info("oracle type I " + fmt("%.3f", null_table.mean(0.0, MethodId::kOracle, "rejection_rate")));
  }

  // 6. Power, no censoring, R = 100
  const auto power_run = run(desk, curve, workers, "power run");
  const Table power(power_run.aggregates);
  std::size_t near29 = 0;
  for (std::size_t k = 0; k < points.size(); ++k)
    if (std::abs(points[k].arr1_target - 0.29) < std::abs(points[near29].arr1_target - 0.29)) near29 = k;
  {
    Verdict v;
    for (MethodId m : {MethodId::kUnivariateInteraction, MethodId::kMob, MethodId::kITree}) {
      const double r = power.mean(top_arr, m, "rejection_rate");
      v.check(r >= 0.90, name(m) + " power " + fmt("%.2f", r) + " >= 0.90 at ARR1 " + fmt("%.3f", top_arr));
    }
    const double a29 = points[near29].arr1_target;
    const double orc = power.mean(a29, MethodId::kOracle, "rejection_rate");
    v.check(orc >= 0.95, "oracle power " + fmt("%.2f", orc) + " >= 0.95 at ARR1 " + fmt("%.3f", a29));
    for (MethodId m : methods::kAllMethods) {
      const double drop = worst_drop(power, points, m);
      if (drop > 0.10) v.check(false, name(m) + " power drops by " + fmt("%.2f", drop));
    }
    v.check(true, "power curves monotone within 0.10");
    report(6, "power (R=100, no censoring)", v);
    for (MethodId m : methods::kAllMethods) {
      std::string line = name(m) + " power:";
      for (const auto& pt : points) line += " " + fmt("%.2f", power.mean(pt.arr1_target, m, "rejection_rate"));
      info(line);
    }
  }

  // 7. Variable ranking
  {
    Verdict v;
    const double top = null_table.mean(0.0, MethodId::kUnivariateInteraction, "top_rank");
    v.check(std::abs(top - 0.2) <= 0.08, "null top-rank univariate_interaction " + interval(top, 0.12, 0.28));
    const double ap_ui = power.mean(top_arr, MethodId::kUnivariateInteraction, "average_precision");
    const double ap_mob = power.mean(top_arr, MethodId::kMob, "average_precision");
    v.check(ap_ui >= 0.90, "AP univariate_interaction " + fmt("%.3f", ap_ui) + " >= 0.90");
    v.check(ap_mob >= 0.65, "AP mob " + fmt("%.3f", ap_mob) + " >= 0.65");
    report(7, "variable ranking", v);
  }

  // 8. Classification accuracy
  {
    Verdict v;
    const std::vector<std::tuple<MethodId, double, double>> bands{{MethodId::kITree, 0.66, 0.82},
                                                                  {MethodId::kMultivariateCox, 0.60, 0.76},
                                                                  {MethodId::kMultivariateTree, 0.62, 0.80},
                                                                  {MethodId::kUnivariateInteraction, 0.53, 0.65}};
    for (const auto& [m, lo, hi] : bands) {
      const double a = power.mean(top_arr, m, "accuracy");
      v.check(a >= lo && a <= hi, name(m) + " " + interval(a, lo, hi));
    }
    report(8, "accuracy at top ARR1 (R=100)", v);
  }

  // 9. Property re-checks
  {
    Verdict v;
    methods::FittedTree t;
    t.p = 3;
    methods::TreeNode root, mid, leaf, small;
    root.variable = 1, root.p_value = 0.01, root.size = 100, root.left = 1, root.right = 2;
    mid.variable = 1, mid.p_value = 0.1, mid.size = 50, mid.depth = 1, mid.left = 3, mid.right = 4;
    leaf.size = 50, leaf.depth = 1;
    small.size = 25, small.depth = 2;
    t.nodes = {root, mid, leaf, small, small};
    v.check(methods::tree_feature_importance(t, 100, 3)[1] == 105.0, "hand tree importance 105");

    bool ap_ok = true;
    for (std::size_t n = 1; n <= 4; ++n) {
      std::vector<double> perm(n);
      std::iota(perm.begin(), perm.end(), 1.0);
      do {
        for (unsigned mask = 1; mask < (1u << n); ++mask) {
          Flags lab(n);
          for (std::size_t i = 0; i < n; ++i) lab[i] = (mask >> i) & 1u;
          ap_ok = ap_ok && std::abs(metrics::average_precision(perm, lab) - ap_by_cuts(perm, lab)) < 1e-12;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
    v.check(ap_ok, "AP vs PR enumeration");

    Rng rng(9);
    std::vector<double> times(2000);
    for (double& x : times) x = std::floor(-std::log(uniform_open(rng)) * 20.0) / 10.0;  // ties on purpose
    const Flags all(times.size(), 1);
    const SurvivalCurve km = kaplan_meier(times, all);
    double km_err = 0.0;
    for (double q = 0.0; q <= 5.0; q += 0.05) {
      const double ecdf = static_cast<double>(std::count_if(times.begin(), times.end(), [&](double x) { return x <= q; }));
      km_err = std::max(km_err, std::abs(km.at(q) - (1.0 - ecdf / times.size())));
    }
    v.check(km_err < 1e-12, "KM = 1-ECDF");

    const std::size_t n = 10000;
    Matrix x(static_cast<Eigen::Index>(n), 1);
    std::vector<double> tt(n);
    for (std::size_t i = 0; i < n; ++i) {
      x(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i % 2);
      tt[i] = -std::log(uniform_open(rng)) / (i % 2 ? 2.0 : 1.0);
    }
    const double b = fit_cox(x, tt, Flags(n, 1)).coefficients[0];
    v.check(std::abs(b - std::log(2.0)) <= 0.05, "Cox beta " + fmt("%.4f", b) + " vs ln 2 +- 0.05");

    harness::ScenarioSpec small_spec = desk;
    small_spec.arr_points = 3;
    small_spec.repetitions = 3;
    harness::RunOptions one, many;
    one.write_outputs = many.write_outputs = false;
    many.workers = 3;
    const auto r1 = harness::run_benchmark(small_spec, curve, one);
    const auto r3 = harness::run_benchmark(small_spec, curve, many);
    bool same = r1.records.size() == r3.records.size();
    for (std::size_t i = 0; same && i < r1.records.size(); ++i) {
      const auto &a = r1.records[i], &c = r3.records[i];
      same = a.het_p == c.het_p && a.importance == c.importance && a.accuracy == c.accuracy && a.rule == c.rule &&
             a.method == c.method && a.rep == c.rep && a.arr1 == c.arr1;
    }
    v.check(same, "pipeline identical with 1 and 3 workers");
    report(9, "property re-checks", v);
  }

  // 10. p = 100 at reduced scale
  {
    Verdict v;
    harness::ScenarioSpec big = load("desk_p100.txt", out);
    big.repetitions = 25;
    const auto big_curve = calibrate(big, workers);
    const auto big_points = dgp::arr_grid(big_curve, big.arr_points);
    const auto big_run = run(big, big_curve, workers, "p=100 power run");
    const Table bt(big_run.aggregates);
    for (MethodId m : big.methods) {
      const double drop = worst_drop(bt, big_points, m);
      if (drop > 0.20) v.check(false, name(m) + " power drops by " + fmt("%.2f", drop));
    }
    v.check(true, "p=100 power curves monotone within 0.20 (R=25)");

    harness::ScenarioSpec big_null = big;
    big_null.id += "_null";
    big_null.output_dir = out / big_null.id;
    big_null.generator.censoring = cens.generator.censoring;
    big_null.arr_points = 1;
    big_null.repetitions = 1000;
    big_null.methods = {MethodId::kUnivariateInteraction};
    const auto bn = run(big_null, big_curve, workers, "p=100 type I run");
    const double r100 = Table(bn.aggregates).mean(0.0, MethodId::kUnivariateInteraction, "rejection_rate");
    const double r20 = null_table.mean(0.0, MethodId::kUnivariateInteraction, "rejection_rate");
    v.check(r100 <= 0.05, "univariate_interaction type I at p=100 " + fmt("%.3f", r100) + " <= 0.05");
    v.check(r100 <= r20, "and not above p=20 (" + fmt("%.3f", r20) + ")");
    report(10, "p=100 reduced-scale run", v);
    std::string line = "p=100 top-point power:";
    for (MethodId m : big.methods) line += " " + name(m) + "=" + fmt("%.2f", bt.mean(big_points.back().arr1_target, m, "rejection_rate"));
    info(line);
  }

  // Informational: fit-time ratios from the power run.
  {
    auto secs = [&](MethodId m) {
      double s = 0.0;
      std::size_t c = 0;
      for (const auto& r : power_run.records)
        if (r.method == m) s += r.fit_seconds, ++c;
      return s / static_cast<double>(std::max<std::size_t>(c, 1));
    };
    std::string line = "mean fit seconds:";
    for (MethodId m : methods::kAllMethods) line += " " + name(m) + "=" + fmt("%.4f", secs(m));
    info(line);
    const double slow = std::min(secs(MethodId::kSides), secs(MethodId::kSeqBT));
    const double fast = std::max(secs(MethodId::kMob), secs(MethodId::kMultivariateTree));
    info("min(SIDES, SeqBT) / max(MOB, multivariate tree) fit time ratio " + fmt("%.1f", slow / fast));
  }

  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
