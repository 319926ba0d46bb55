#include "survhte/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <thread>

namespace survhte::dgp {

namespace {

constexpr std::size_t kCalibrationChunk = 4096;

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xCBF29CE484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= bytes[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  return fnv1a(s.data(), s.size(), h);
}

// Fills `x` with one covariate draw.
void draw_covariates(const GeneratorConfig& config, Rng& rng, std::normal_distribution<double>& normal,
                     std::span<double> x) {
  if (const auto* emp = std::get_if<EmpiricalCovariates>(&config.covariates)) {
    const Matrix& m = *emp->rows;
    std::uniform_int_distribution<Eigen::Index> pick(0, m.rows() - 1);
    const Eigen::Index r = pick(rng);
    std::copy(m.row(r).data(), m.row(r).data() + m.cols(), x.begin());
  } else {
    for (double& v : x) v = normal(rng);
  }
}

double dot(std::span<const double> x, const Vector& gamma) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) s += gamma[static_cast<Eigen::Index>(j)] * x[j];
  return s;
}

double beta_draw(Rng& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  for (;;) {
    const double x = ga(rng);
    const double y = gb(rng);
    if (x + y > 0.0) return x / (x + y);
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (p == 0) throw std::invalid_argument("generator: p must be positive");
  if (static_cast<std::size_t>(gamma.size()) != p)
    throw std::invalid_argument("generator: gamma has length " + std::to_string(gamma.size()) + " but p is " +
                                std::to_string(p));
  if (!gamma.allFinite()) throw std::invalid_argument("generator: gamma has non-finite entries");
  if (subgroup.clauses().empty()) throw std::invalid_argument("generator: empty subgroup definition");
  subgroup.check_dimension(p);
  if (const auto* emp = std::get_if<EmpiricalCovariates>(&covariates)) {
    if (!emp->rows || emp->rows->rows() == 0) throw std::invalid_argument("generator: empty empirical matrix");
    if (static_cast<std::size_t>(emp->rows->cols()) != p)
      throw std::invalid_argument("generator: empirical matrix has " + std::to_string(emp->rows->cols()) +
                                  " columns but p is " + std::to_string(p));
  }
  if (censoring) {
    if (!(censoring->a > 0.0) || !(censoring->b > 0.0) || !(censoring->scale > 0.0))
      throw std::invalid_argument("generator: censoring parameters must be positive");
  }
  if (n < 2) throw std::invalid_argument("generator: n must be at least 2");
}

std::uint64_t GeneratorConfig::calibration_hash() const {
  std::string text = "p=" + std::to_string(p) + ";gamma=";
  for (Eigen::Index j = 0; j < gamma.size(); ++j) text += format_double(gamma[j]) + " ";
  text += ";subgroup=" + subgroup.describe() + ";covariates=";
  std::uint64_t h;
  if (const auto* emp = std::get_if<EmpiricalCovariates>(&covariates)) {
    text += "empirical:" + std::to_string(emp->rows->rows()) + "x" + std::to_string(emp->rows->cols());
    h = fnv1a(text);
    h = fnv1a(emp->rows->data(), sizeof(double) * static_cast<std::size_t>(emp->rows->size()), h);
  } else {
    text += "gaussian";
    h = fnv1a(text);
  }
  return h;
}

double linear_predictor(std::span<const double> x, bool treated, bool good_responder, double beta0, double beta1,
                        const Vector& gamma) {
  const double effect = treated ? (good_responder ? beta1 : beta0) : 0.0;
  return effect + dot(x, gamma);
}

double survival_at(double t, double lp) { return std::exp(-std::exp(lp) * t * t / 2.0); }

double sample_event_time(double lp, Rng& rng) {
  const double u = uniform_open(rng);
  return std::sqrt(-2.0 * std::log(u) * std::exp(-lp));
}

bool subgroup_assign(std::span<const double> x, const SubgroupDefinition& def) { return def.contains(x); }

double individual_arr(std::span<const double> x, double beta0, double beta1, const Vector& gamma,
                      const SubgroupDefinition& def) {
  const double base = dot(x, gamma);
  const double beta = def.contains(x) ? beta1 : beta0;
  return survival_at(1.0, base + beta) - survival_at(1.0, base);
}

Vector prognostic_vector(std::size_t p) {
  Vector g = Vector::Zero(static_cast<Eigen::Index>(p));
  // 1-based inclusive ranges
  auto fill = [&](int from, int to, double v) {
    for (int i = from; i <= to; ++i) g[i - 1] = v;
  };
  if (p == 20) {
    fill(1, 5, 1.0);
    fill(6, 10, -1.0);
  } else if (p == 100) {
    fill(1, 5, 1.0);
    fill(6, 10, -1.0);
    fill(11, 15, 0.1);
    fill(16, 25, -0.1);
    fill(26, 30, 0.1);
    fill(31, 35, 0.01);
    fill(36, 45, -0.01);
    fill(46, 50, 0.01);
    fill(51, 55, -0.01);
    fill(56, 60, 0.01);
  } else if (p == 1000) {
    fill(1, 10, 1.0);
    fill(11, 20, -1.0);
    fill(21, 70, 0.1);
    fill(71, 120, -0.1);
    fill(121, 320, 0.01);
    fill(321, 520, -0.01);
  } else {
    throw std::invalid_argument("no published prognostic vector for p=" + std::to_string(p) +
                                "; supply gamma explicitly");
  }
  return g;
}

std::vector<double> beta_grid(std::size_t points, double lo, double hi) {
  if (points < 2 || !(hi > lo)) throw std::invalid_argument("beta grid needs >= 2 points and hi > lo");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1);
  return g;
}

CalibrationCurve calibrate(const GeneratorConfig& config, std::span<const double> grid, std::size_t mc_size,
                           std::uint64_t seed, unsigned workers) {
  config.validate();
  if (grid.size() < 2) throw std::invalid_argument("calibration grid needs at least two points");
  if (mc_size == 0) throw std::invalid_argument("calibration sample size must be positive");
  const std::size_t k_count = grid.size();
  std::vector<double> scale(k_count);
  for (std::size_t k = 0; k < k_count; ++k) scale[k] = std::exp(grid[k]);

  const std::size_t chunks = (mc_size + kCalibrationChunk - 1) / kCalibrationChunk;
  struct Partial {
    std::vector<double> sum0, sum1;
    std::size_t n0 = 0, n1 = 0;
  };
  std::vector<Partial> partials(chunks);

  auto run_chunk = [&](std::size_t c) {
    Partial& part = partials[c];
    part.sum0.assign(k_count, 0.0);
    part.sum1.assign(k_count, 0.0);
    Rng rng(derive_seed(seed, {c}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(config.p);
    const std::size_t begin = c * kCalibrationChunk;
    const std::size_t end = std::min(mc_size, begin + kCalibrationChunk);
    for (std::size_t i = begin; i < end; ++i) {
      draw_covariates(config, rng, normal, x);
      const double half_hazard = std::exp(dot(x, config.gamma)) / 2.0;
      const double s_control = std::exp(-half_hazard);
      const bool g = config.subgroup.contains(x);
      std::vector<double>& sum = g ? part.sum1 : part.sum0;
      (g ? part.n1 : part.n0) += 1;
      for (std::size_t k = 0; k < k_count; ++k) sum[k] += std::exp(-half_hazard * scale[k]) - s_control;
    }
  };

  const unsigned w = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(chunks)));
  if (w == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < w; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < chunks; c += w) run_chunk(c);
      });
    for (auto& th : pool) th.join();
  }

  CalibrationCurve out;
  out.beta_grid.assign(grid.begin(), grid.end());
  out.arr0.assign(k_count, 0.0);
  out.arr1.assign(k_count, 0.0);
  std::size_t n0 = 0, n1 = 0;
  for (const Partial& part : partials) {
    for (std::size_t k = 0; k < k_count; ++k) {
      out.arr0[k] += part.sum0[k];
      out.arr1[k] += part.sum1[k];
    }
    n0 += part.n0;
    n1 += part.n1;
  }
  if (n0 == 0 || n1 == 0)
    throw std::invalid_argument("degenerate subgroup definition: " + std::to_string(n1) + " of " +
                                std::to_string(mc_size) + " calibration draws fall in G=1");
  for (std::size_t k = 0; k < k_count; ++k) {
    out.arr0[k] /= static_cast<double>(n0);
    out.arr1[k] /= static_cast<double>(n1);
  }
  out.prevalence = static_cast<double>(n1) / static_cast<double>(mc_size);
  out.mc_size = mc_size;
  out.seed = seed;
  out.config_hash = config.calibration_hash();
  return out;
}

std::vector<double> isotonic_nonincreasing(std::span<const double> y) {
  // PAVA on blocks (mean, weight)
  std::vector<double> mean;
  std::vector<std::size_t> weight;
  for (double v : y) {
    mean.push_back(v);
    weight.push_back(1);
    while (mean.size() > 1 && mean[mean.size() - 2] < mean.back()) {
      const std::size_t w2 = weight.back();
      const double m2 = mean.back();
      mean.pop_back();
      weight.pop_back();
      const std::size_t w1 = weight.back();
      mean.back() = (mean.back() * static_cast<double>(w1) + m2 * static_cast<double>(w2)) /
                    static_cast<double>(w1 + w2);
      weight.back() = w1 + w2;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (std::size_t b = 0; b < mean.size(); ++b) out.insert(out.end(), weight[b], mean[b]);
  return out;
}

bool is_nonincreasing(std::span<const double> y, double tolerance) {
  for (std::size_t k = 1; k < y.size(); ++k)
    if (y[k] > y[k - 1] + tolerance) return false;
  return true;
}

double invert_arr(const CalibrationCurve& curve, double target, Subgroup which) {
  const std::vector<double> y = isotonic_nonincreasing(curve.values(which));
  const std::vector<double>& g = curve.beta_grid;
  if (y.empty() || y.size() != g.size()) throw std::invalid_argument("calibration curve is malformed");
  const double hi = y.front();
  const double lo = y.back();
  if (!(target <= hi && target >= lo))
    throw std::out_of_range("target ARR " + format_double(target) + " for G=" +
                            (which == Subgroup::kGoodResponders ? "1" : "0") + " outside achievable interval [" +
                            format_double(lo) + ", " + format_double(hi) + "]");
  std::size_t k = 0;
  while (k < y.size() && y[k] > target) ++k;
  if (k == 0) return g[0];
  if (y[k] == target) return g[k];
  const double frac = (y[k - 1] - target) / (y[k - 1] - y[k]);
  return g[k - 1] + frac * (g[k] - g[k - 1]);
}

double solve_null_constraint(double arr1_target, double prevalence) {
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw std::invalid_argument("prevalence must lie in (0,1)");
  return -arr1_target * prevalence / (1.0 - prevalence);
}

double max_null_arr1(const CalibrationCurve& curve) {
  const std::vector<double> y1 = isotonic_nonincreasing(curve.arr1);
  const std::vector<double> y0 = isotonic_nonincreasing(curve.arr0);
  const double pi = curve.prevalence;
  const double bound = -y0.back() * (1.0 - pi) / pi;
  return std::max(0.0, std::min(y1.front(), bound));
}

HeterogeneityPoint heterogeneity_point(const CalibrationCurve& curve, double arr1_target) {
  HeterogeneityPoint pt;
  pt.arr1_target = arr1_target;
  if (arr1_target == 0.0) return pt;
  pt.arr0_target = solve_null_constraint(arr1_target, curve.prevalence);
  pt.beta1 = invert_arr(curve, pt.arr1_target, Subgroup::kGoodResponders);
  pt.beta0 = invert_arr(curve, pt.arr0_target, Subgroup::kBadResponders);
  return pt;
}

std::vector<HeterogeneityPoint> arr_grid(const CalibrationCurve& curve, std::size_t n_points) {
  if (n_points == 0) throw std::invalid_argument("arr grid needs at least one point");
  const double top = max_null_arr1(curve);
  std::vector<HeterogeneityPoint> out;
  for (std::size_t k = 0; k < n_points; ++k)
    out.push_back(heterogeneity_point(curve, top * static_cast<double>(k) / static_cast<double>(n_points)));
  return out;
}

TrialData generate_trial(const GeneratorConfig& config, const HeterogeneityPoint& point, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const std::size_t n = config.n;
  TrialData d;
  d.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(config.p));
  d.treatment.resize(n);
  d.time.resize(n);
  d.event.resize(n);
  Flags g(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<double> x(d.covariates.data() + i * config.p, config.p);
    draw_covariates(config, rng, normal, x);
    const bool w = coin(rng);
    const bool gi = config.subgroup.contains(x);
    const double lp = linear_predictor(x, w, gi, point.beta0, point.beta1, config.gamma);
    const double t = sample_event_time(lp, rng);
    double u = t;
    bool e = true;
    if (config.censoring) {
      double c = 0.0;
      while (!(c > 0.0)) c = config.censoring->scale * beta_draw(rng, config.censoring->a, config.censoring->b);
      if (c < t) {
        u = c;
        e = false;
      }
    }
    d.treatment[i] = w;
    d.time[i] = u;
    d.event[i] = e;
    g[i] = gi;
  }
  d.true_subgroup = std::move(g);
  return d;
}

}  // namespace survhte::dgp
