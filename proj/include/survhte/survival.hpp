#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "survhte/common.hpp"

namespace survhte {

/// Right-continuous step function, equal to `initial` before the first jump.
struct StepFunction {
  std::vector<double> times;   // strictly increasing jump locations
  std::vector<double> values;  // value from times[k] (inclusive) onward
  double initial = 0.0;

  double at(double t) const;
};

/// Product-limit survival estimate. Jumps only at event times.
struct SurvivalCurve {
  std::vector<double> times;
  std::vector<double> survival;

  double at(double t) const;
};

SurvivalCurve kaplan_meier(std::span<const double> time, std::span<const std::uint8_t> event);

struct CoxFit {
  Vector coefficients;
  Matrix covariance;  // inverse penalized information
  std::vector<double> wald_p;
  StepFunction baseline_cumhaz;  // Breslow, uncentred linear predictor
  bool converged = false;
  int iterations = 0;
  double ridge = 0.0;
  double penalized_loglik = 0.0;  // see cox_objective

  double linear_predictor(std::span<const double> x) const;
  double z(std::size_t j) const;
};

/// Cox proportional-hazards fit by Newton-Raphson with step halving.
///
/// The maximized objective is the Breslow partial log-likelihood minus
/// (ridge/2) times the squared norm of the penalized coefficients; columns
/// flagged in `unpenalized` (empty means none) carry no penalty. Convergence
/// is declared when the gradient max-norm divided by n drops below 1e-7.
/// Constant columns are dropped and reported with coefficient 0 and p-value 1.
/// Throws std::invalid_argument on shape errors, fewer than two rows or no
/// events.
CoxFit fit_cox(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event,
               double ridge = 0.0, const Flags& unpenalized = {});

/// The objective maximized by fit_cox, evaluated at `beta`.
double cox_objective(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event,
                     double ridge, const Flags& unpenalized, const Vector& beta);

/// exp(-Lambda0(t) * exp(beta' x)); times past the last event reuse the last
/// baseline value.
double predict_survival(const CoxFit& fit, std::span<const double> x, double t);

/// Per-observation score residuals (Breslow), n x q. Each column sums to the
/// score vector at the fitted coefficients.
Matrix cox_score_residuals(const Matrix& design, std::span<const double> time,
                           std::span<const std::uint8_t> event, const CoxFit& fit);

/// Unpenalized Cox fit for designs whose rows take one of a few covariate
/// patterns (binary treatment and subgroup indicators). Row r has covariate
/// vector `patterns.row(pattern[r])`. Newton iterations run on per-time count
/// tables instead of rows.
struct PatternCoxFit {
  Vector coefficients;
  Matrix covariance;
  std::vector<double> wald_p;  // robust when requested
  double loglik = 0.0;  // unscaled partial log-likelihood at the estimate
  bool converged = false;
  bool valid = false;  // false without events or with a singular information

  /// coefficient / standard error; 0 when invalid.
  double z(std::size_t j) const;
};

/// `rows` lists the rows to use in ascending time order. With `robust`, the
/// covariance and Wald p-values use the Lin-Wei sandwich estimator.
PatternCoxFit fit_pattern_cox(std::span<const double> time, std::span<const std::uint8_t> event,
                              std::span<const std::uint8_t> pattern, std::span<const std::size_t> rows,
                              const Matrix& patterns, bool robust = false);

/// Indices 0..n-1 stably sorted by time.
std::vector<std::size_t> ascending_time_order(std::span<const double> time);

struct LogRankResult {
  double observed_minus_expected = 0.0;  // for group 1
  double variance = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

LogRankResult logrank_test(std::span<const double> time, std::span<const std::uint8_t> event,
                           std::span<const std::uint8_t> group);

}  // namespace survhte
