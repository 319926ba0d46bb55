#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "survhte/common.hpp"
#include "survhte/rule.hpp"
#include "survhte/trial_data.hpp"

namespace survhte::dgp {

// Baseline hazard h0(t) = t, so the cumulative baseline hazard is t^2 / 2 and
// every survival probability below is exp(-exp(lp) * t^2 / 2).

struct GaussianCovariates {};

/// Rows of a user-supplied matrix, drawn uniformly with replacement.
struct EmpiricalCovariates {
  std::shared_ptr<const Matrix> rows;
};

using CovariateSource = std::variant<GaussianCovariates, EmpiricalCovariates>;

/// Censoring time C = scale * Beta(a, b).
struct BetaCensoring {
  double a = 0.4;
  double b = 0.4;
  double scale = 20.0;
};

struct GeneratorConfig {
  std::size_t p = 0;
  Vector gamma;  // prognostic log-hazard effects
  SubgroupDefinition subgroup;
  CovariateSource covariates = GaussianCovariates{};
  std::optional<BetaCensoring> censoring;
  std::size_t n = 500;

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;

  /// Stable hash of everything the calibration curves depend on (dimension,
  /// gamma, subgroup, covariate law). Sample size and censoring are excluded.
  std::uint64_t calibration_hash() const;
};

enum class Subgroup { kBadResponders = 0, kGoodResponders = 1 };

struct CalibrationCurve {
  std::vector<double> beta_grid;
  std::vector<double> arr0;  // ARR at t=1 in G=0 as a function of beta0
  std::vector<double> arr1;  // ARR at t=1 in G=1 as a function of beta1
  double prevalence = 0.0;   // estimated P(G=1)
  std::size_t mc_size = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;

  const std::vector<double>& values(Subgroup which) const {
    return which == Subgroup::kGoodResponders ? arr1 : arr0;
  }
};

struct HeterogeneityPoint {
  double arr1_target = 0.0;
  double arr0_target = 0.0;
  double beta1 = 0.0;
  double beta0 = 0.0;
};

double linear_predictor(std::span<const double> x, bool treated, bool good_responder, double beta0, double beta1,
                        const Vector& gamma);

double survival_at(double t, double lp);

/// Inverse-transform draw with P(T >= t) = survival_at(t, lp).
double sample_event_time(double lp, Rng& rng);

bool subgroup_assign(std::span<const double> x, const SubgroupDefinition& def);

/// S(1 | x, treated) - S(1 | x, control) under the subgroup-specific beta.
double individual_arr(std::span<const double> x, double beta0, double beta1, const Vector& gamma,
                      const SubgroupDefinition& def);

/// Sparse published prognostic vectors for p in {20, 100, 1000}; throws
/// std::invalid_argument for any other p.
Vector prognostic_vector(std::size_t p);

/// `points` evenly spaced values on [lo, hi].
std::vector<double> beta_grid(std::size_t points = 201, double lo = -10.0, double hi = 10.0);

/// Monte-Carlo estimate of both ARR curves over `grid`. The same `mc_size`
/// covariate draws are reused at every grid point. Draws come in fixed-size
/// chunks, each from its own substream of `seed`, so `workers` only changes
/// speed, never the result.
CalibrationCurve calibrate(const GeneratorConfig& config, std::span<const double> grid, std::size_t mc_size,
                           std::uint64_t seed, unsigned workers = 1);

/// Pool-adjacent-violators fit of a nonincreasing sequence.
std::vector<double> isotonic_nonincreasing(std::span<const double> y);

/// True when `y` is nonincreasing up to `tolerance`.
bool is_nonincreasing(std::span<const double> y, double tolerance);

/// Beta reaching `target` on the isotonic-smoothed curve by linear
/// interpolation. Throws std::out_of_range naming the achievable interval.
double invert_arr(const CalibrationCurve& curve, double target, Subgroup which);

/// ARR in G=0 that keeps the overall ARR at zero.
double solve_null_constraint(double arr1_target, double prevalence);

/// Largest ARR1 whose null-constrained partner ARR0 is still on the curve.
double max_null_arr1(const CalibrationCurve& curve);

HeterogeneityPoint heterogeneity_point(const CalibrationCurve& curve, double arr1_target);

/// Targets k * max_null_arr1 / n_points for k = 0..n_points-1; the first is the
/// null point with both betas exactly zero.
std::vector<HeterogeneityPoint> arr_grid(const CalibrationCurve& curve, std::size_t n_points = 10);

/// `config.n` i.i.d. rows; deterministic given seed.
TrialData generate_trial(const GeneratorConfig& config, const HeterogeneityPoint& point, std::uint64_t seed);

}  // namespace survhte::dgp
