#include "survhte/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "survhte/stats.hpp"

namespace survhte {

double StepFunction::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return initial;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double SurvivalCurve::at(double t) const {
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 1.0;
  return survival[static_cast<std::size_t>(it - times.begin()) - 1];
}

namespace {

std::vector<std::size_t> time_order(std::span<const double> time) {
  std::vector<std::size_t> order(time.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return time[a] < time[b]; });
  return order;
}

}  // namespace

SurvivalCurve kaplan_meier(std::span<const double> time, std::span<const std::uint8_t> event) {
  if (time.size() != event.size()) throw std::invalid_argument("kaplan_meier: length mismatch");
  SurvivalCurve curve;
  const auto order = time_order(time);
  const std::size_t n = order.size();
  double s = 1.0;
  std::size_t i = 0;
  while (i < n) {
    const double t = time[order[i]];
    std::size_t j = i, deaths = 0;
    for (; j < n && time[order[j]] == t; ++j) deaths += event[order[j]];
    if (deaths > 0) {
      const double at_risk = static_cast<double>(n - i);
      s *= 1.0 - static_cast<double>(deaths) / at_risk;
      curve.times.push_back(t);
      curve.survival.push_back(s);
    }
    i = j;
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Cox partial likelihood

namespace {

struct CoxData {
  Matrix xa;                       // active (non-constant) columns, rows in ascending time order
  std::vector<double> t;           // sorted times
  std::vector<std::uint8_t> e;     // events in the same order
  std::vector<std::size_t> order;  // sorted position -> original row
  std::vector<Eigen::Index> columns;
  Vector penalty;  // per active column: ridge or 0
  double n = 0.0;
};

struct Derivatives {
  double loglik = 0.0;  // unscaled partial log-likelihood
  Vector grad;
  Matrix hess;  // negative Hessian of the unscaled log-likelihood
};

Derivatives partial_likelihood(const CoxData& d, const Vector& beta, bool second_order) {
  const auto q = d.xa.cols();
  const auto n = static_cast<std::ptrdiff_t>(d.t.size());
  Derivatives out;
  out.grad = Vector::Zero(q);
  if (second_order) out.hess = Matrix::Zero(q, q);

  Vector eta = q > 0 ? Vector(d.xa * beta) : Vector::Zero(n);
  const double shift = n > 0 ? eta.maxCoeff() : 0.0;

  double s0 = 0.0;
  Vector s1 = Vector::Zero(q);
  Matrix s2;
  if (second_order) s2 = Matrix::Zero(q, q);
  Vector xsum_events = Vector::Zero(q);

  std::ptrdiff_t k = n - 1;
  while (k >= 0) {
    const double t = d.t[static_cast<std::size_t>(k)];
    double deaths = 0.0;
    double eta_events = 0.0;
    xsum_events.setZero();
    std::ptrdiff_t j = k;
    for (; j >= 0 && d.t[static_cast<std::size_t>(j)] == t; --j) {
      const auto xi = d.xa.row(j);
      const double r = std::exp(eta(j) - shift);
      s0 += r;
      s1.noalias() += r * xi.transpose();
      if (second_order) s2.noalias() += r * xi.transpose() * xi;
      if (d.e[static_cast<std::size_t>(j)]) {
        deaths += 1.0;
        eta_events += eta(j);
        xsum_events.noalias() += xi.transpose();
      }
    }
    if (deaths > 0.0) {
      out.loglik += eta_events - deaths * (std::log(s0) + shift);
      const Vector mean = s1 / s0;
      out.grad.noalias() += xsum_events - deaths * mean;
      if (second_order) out.hess.noalias() += deaths * (s2 / s0 - mean * mean.transpose());
    }
    k = j;
  }
  return out;
}

double penalized_objective(const CoxData& d, const Derivatives& der, const Vector& beta) {
  return der.loglik - 0.5 * (d.penalty.array() * beta.array().square()).sum();
}

CoxData prepare(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event,
                double ridge, const Flags& unpenalized) {
  const auto n = static_cast<std::size_t>(design.rows());
  if (time.size() != n || event.size() != n) throw std::invalid_argument("fit_cox: length mismatch");
  if (n < 2) throw std::invalid_argument("fit_cox: need at least two rows");
  if (!unpenalized.empty() && unpenalized.size() != static_cast<std::size_t>(design.cols()))
    throw std::invalid_argument("fit_cox: unpenalized mask length differs from column count");
  if (ridge < 0.0 || !std::isfinite(ridge)) throw std::invalid_argument("fit_cox: ridge must be finite and nonnegative");
  if (std::none_of(event.begin(), event.end(), [](std::uint8_t e) { return e != 0; }))
    throw std::invalid_argument("no events");
  CoxData d;
  d.n = static_cast<double>(n);
  d.order = time_order(time);
  std::vector<double> pen;
  for (Eigen::Index c = 0; c < design.cols(); ++c) {
    const auto col = design.col(c);
    if (col.maxCoeff() == col.minCoeff()) continue;
    d.columns.push_back(c);
    const bool free = !unpenalized.empty() && unpenalized[static_cast<std::size_t>(c)];
    pen.push_back(free ? 0.0 : ridge);
  }
  d.penalty = Eigen::Map<Vector>(pen.data(), static_cast<Eigen::Index>(pen.size()));
  d.xa.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d.columns.size()));
  d.t.resize(n);
  d.e.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = d.order[k];
    d.t[k] = time[i];
    d.e[k] = event[i] ? 1 : 0;
    for (std::size_t c = 0; c < d.columns.size(); ++c)
      d.xa(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = design(static_cast<Eigen::Index>(i), d.columns[c]);
  }
  return d;
}

// Solves a x = b for a symmetric positive (semi)definite a, adding diagonal
// jitter when the factorization fails.
Vector spd_solve(const Matrix& a, const Vector& b) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().maxCoeff());
  for (double jitter = 1e-10; jitter < 1e3; jitter *= 100.0) {
    Matrix shifted = a;
    shifted.diagonal().array() += jitter * scale;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.solve(b);
  }
  return Vector::Zero(b.size());
}

Matrix spd_inverse(const Matrix& a) {
  const auto q = a.rows();
  Matrix out(q, q);
  Eigen::LDLT<Matrix> ldlt(a);
  out = ldlt.solve(Matrix::Identity(q, q));
  return 0.5 * (out + out.transpose());
}

}  // namespace

double CoxFit::linear_predictor(std::span<const double> x) const {
  double e = 0.0;
  for (Eigen::Index c = 0; c < coefficients.size(); ++c) e += coefficients(c) * x[static_cast<std::size_t>(c)];
  return e;
}

double CoxFit::z(std::size_t j) const {
  const auto jj = static_cast<Eigen::Index>(j);
  const double var = covariance(jj, jj);
  if (!(var > 0.0)) return 0.0;
  return coefficients(jj) / std::sqrt(var);
}

double cox_objective(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event,
                     double ridge, const Flags& unpenalized, const Vector& beta) {
  const CoxData d = prepare(design, time, event, ridge, unpenalized);
  Vector active(static_cast<Eigen::Index>(d.columns.size()));
  for (std::size_t c = 0; c < d.columns.size(); ++c) active(static_cast<Eigen::Index>(c)) = beta(d.columns[c]);
  const Derivatives der = partial_likelihood(d, active, false);
  return penalized_objective(d, der, active);
}

CoxFit fit_cox(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event, double ridge,
               const Flags& unpenalized) {
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-7;
  const CoxData d = prepare(design, time, event, ridge, unpenalized);
  const auto q = static_cast<Eigen::Index>(d.columns.size());

  Vector beta = Vector::Zero(q);
  Derivatives der = partial_likelihood(d, beta, true);
  double obj = penalized_objective(d, der, beta);
  bool converged = false;
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    const Vector grad = der.grad - (d.penalty.array() * beta.array()).matrix();
    if (q == 0 || grad.cwiseAbs().maxCoeff() / d.n < kTol) {
      converged = true;
      break;
    }
    Matrix info = der.hess;
    info.diagonal() += d.penalty;
    const Vector step = spd_solve(info, grad);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      const Vector trial = beta + scale * step;
      Derivatives trial_der = partial_likelihood(d, trial, true);
      const double trial_obj = penalized_objective(d, trial_der, trial);
      if (std::isfinite(trial_obj) && trial_obj >= obj) {
        beta = trial;
        der = std::move(trial_der);
        obj = trial_obj;
        improved = true;
        break;
      }
    }
    if (!improved) break;  // stalled at machine precision; converged stays false
  }

  CoxFit fit;
  fit.ridge = ridge;
  fit.iterations = iter;
  fit.converged = converged;
  fit.penalized_loglik = obj;
  const Eigen::Index full_q = design.cols();
  fit.coefficients = Vector::Zero(full_q);
  fit.covariance = Matrix::Zero(full_q, full_q);
  fit.wald_p.assign(static_cast<std::size_t>(full_q), 1.0);
  if (q > 0) {
    Matrix info = der.hess;
    info.diagonal() += d.penalty;
    const Matrix cov = spd_inverse(info);
    for (Eigen::Index a = 0; a < q; ++a) {
      const Eigen::Index ca = d.columns[static_cast<std::size_t>(a)];
      fit.coefficients(ca) = beta(a);
      for (Eigen::Index b = 0; b < q; ++b) fit.covariance(ca, d.columns[static_cast<std::size_t>(b)]) = cov(a, b);
    }
    for (Eigen::Index a = 0; a < q; ++a) {
      const Eigen::Index ca = d.columns[static_cast<std::size_t>(a)];
      const double var = fit.covariance(ca, ca);
      fit.wald_p[static_cast<std::size_t>(ca)] =
          var > 0.0 && std::isfinite(var) ? stats::normal_two_sided_p(beta(a) / std::sqrt(var)) : 1.0;
    }
  }

  // Breslow cumulative baseline hazard.
  const std::size_t n = d.order.size();
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i)
    risk[i] = std::exp(fit.linear_predictor({design.data() + i * static_cast<std::size_t>(full_q), static_cast<std::size_t>(full_q)}));
  std::vector<double> at_risk_sum(n);
  double acc = 0.0;
  for (std::ptrdiff_t k = static_cast<std::ptrdiff_t>(n) - 1; k >= 0; --k) {
    acc += risk[d.order[static_cast<std::size_t>(k)]];
    at_risk_sum[static_cast<std::size_t>(k)] = acc;
  }
  double cum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    const double t = time[d.order[i]];
    std::size_t j = i, deaths = 0;
    for (; j < n && time[d.order[j]] == t; ++j) deaths += event[d.order[j]];
    if (deaths > 0) {
      cum += static_cast<double>(deaths) / at_risk_sum[i];
      fit.baseline_cumhaz.times.push_back(t);
      fit.baseline_cumhaz.values.push_back(cum);
    }
    i = j;
  }
  return fit;
}

double predict_survival(const CoxFit& fit, std::span<const double> x, double t) {
  const double cumhaz = fit.baseline_cumhaz.at(t);
  if (cumhaz == 0.0) return 1.0;
  return std::exp(-cumhaz * std::exp(fit.linear_predictor(x)));
}

Matrix cox_score_residuals(const Matrix& design, std::span<const double> time, std::span<const std::uint8_t> event,
                           const CoxFit& fit) {
  const auto n = static_cast<std::size_t>(design.rows());
  const Eigen::Index q = design.cols();
  const auto order = time_order(time);
  std::vector<double> risk(n);
  for (std::size_t i = 0; i < n; ++i) risk[i] = std::exp(fit.coefficients.dot(design.row(static_cast<Eigen::Index>(i)).transpose()));

  // Risk-set sums at each position of the ascending order (ties share sums).
  std::vector<double> s0(n);
  Matrix s1(static_cast<Eigen::Index>(n), q);
  {
    double acc0 = 0.0;
    Eigen::RowVectorXd acc1 = Eigen::RowVectorXd::Zero(q);
    std::ptrdiff_t k = static_cast<std::ptrdiff_t>(n) - 1;
    while (k >= 0) {
      const double t = time[order[static_cast<std::size_t>(k)]];
      std::ptrdiff_t j = k;
      for (; j >= 0 && time[order[static_cast<std::size_t>(j)]] == t; --j) {
        const std::size_t i = order[static_cast<std::size_t>(j)];
        acc0 += risk[i];
        acc1 += risk[i] * design.row(static_cast<Eigen::Index>(i));
      }
      for (std::ptrdiff_t m = k; m > j; --m) {
        s0[static_cast<std::size_t>(m)] = acc0;
        s1.row(m) = acc1;
      }
      k = j;
    }
  }

  Matrix resid = Matrix::Zero(static_cast<Eigen::Index>(n), q);
  double cum_a = 0.0;
  Eigen::RowVectorXd cum_b = Eigen::RowVectorXd::Zero(q);
  std::size_t k = 0;
  while (k < n) {
    const double t = time[order[k]];
    std::size_t j = k, deaths = 0;
    for (; j < n && time[order[j]] == t; ++j) deaths += event[order[j]];
    const Eigen::RowVectorXd mean = s1.row(static_cast<Eigen::Index>(k)) / s0[k];
    if (deaths > 0) {
      const double inc = static_cast<double>(deaths) / s0[k];
      cum_a += inc;
      cum_b += inc * mean;
    }
    for (std::size_t m = k; m < j; ++m) {
      const std::size_t i = order[m];
      const auto xi = design.row(static_cast<Eigen::Index>(i));
      Eigen::RowVectorXd r = -risk[i] * (cum_a * xi - cum_b);
      if (event[i]) r += xi - mean;
      resid.row(static_cast<Eigen::Index>(i)) = r;
    }
    k = j;
  }
  return resid;
}

double PatternCoxFit::z(std::size_t j) const {
  if (!valid) return 0.0;
  const auto jj = static_cast<Eigen::Index>(j);
  const double var = covariance(jj, jj);
  if (!(var > 0.0) || !std::isfinite(var)) return 0.0;
  return coefficients(jj) / std::sqrt(var);
}

std::vector<std::size_t> ascending_time_order(std::span<const double> time) { return time_order(time); }

PatternCoxFit fit_pattern_cox(std::span<const double> time, std::span<const std::uint8_t> event,
                              std::span<const std::uint8_t> pattern, std::span<const std::size_t> rows,
                              const Matrix& patterns, bool robust) {
  constexpr int kMaxIter = 100;
  constexpr double kTol = 1e-7;
  const auto g_count = static_cast<std::size_t>(patterns.rows());
  const Eigen::Index q = patterns.cols();
  PatternCoxFit fit;
  fit.coefficients = Vector::Zero(q);
  fit.covariance = Matrix::Zero(q, q);
  fit.wald_p.assign(static_cast<std::size_t>(q), 1.0);

  // Count tables at each distinct event time: at-risk and deaths per pattern.
  std::vector<double> at_risk(g_count, 0.0);
  for (std::size_t r : rows) at_risk[pattern[r]] += 1.0;
  std::vector<double> risk_table, death_table;
  std::size_t k = 0;
  const std::size_t m = rows.size();
  while (k < m) {
    const double t = time[rows[k]];
    std::size_t j = k;
    std::vector<double> deaths(g_count, 0.0);
    bool any = false;
    for (; j < m && time[rows[j]] == t; ++j) {
      if (event[rows[j]]) {
        deaths[pattern[rows[j]]] += 1.0;
        any = true;
      }
    }
    if (any) {
      risk_table.insert(risk_table.end(), at_risk.begin(), at_risk.end());
      death_table.insert(death_table.end(), deaths.begin(), deaths.end());
    }
    for (std::size_t i = k; i < j; ++i) at_risk[pattern[rows[i]]] -= 1.0;
    k = j;
  }
  const std::size_t times = risk_table.size() / std::max<std::size_t>(g_count, 1);
  if (times == 0 || q == 0) return fit;
  const double n = static_cast<double>(m);

  struct Eval {
    double loglik = 0.0;
    Vector grad;
    Matrix info;
  };
  auto evaluate = [&](const Vector& beta) {
    Eval ev;
    ev.grad = Vector::Zero(q);
    ev.info = Matrix::Zero(q, q);
    const Vector eta = patterns * beta;
    const double shift = eta.maxCoeff();
    Vector w(static_cast<Eigen::Index>(g_count));
    for (std::size_t g = 0; g < g_count; ++g) w(static_cast<Eigen::Index>(g)) = std::exp(eta(static_cast<Eigen::Index>(g)) - shift);
    for (std::size_t s = 0; s < times; ++s) {
      const double* nr = &risk_table[s * g_count];
      const double* dr = &death_table[s * g_count];
      double s0 = 0.0, deaths = 0.0;
      Vector s1 = Vector::Zero(q);
      Matrix s2 = Matrix::Zero(q, q);
      for (std::size_t g = 0; g < g_count; ++g) {
        const auto gi = static_cast<Eigen::Index>(g);
        if (dr[g] > 0.0) {
          ev.loglik += dr[g] * eta(gi);
          ev.grad.noalias() += dr[g] * patterns.row(gi).transpose();
          deaths += dr[g];
        }
        if (nr[g] > 0.0) {
          const double r = nr[g] * w(gi);
          s0 += r;
          s1.noalias() += r * patterns.row(gi).transpose();
          s2.noalias() += r * patterns.row(gi).transpose() * patterns.row(gi);
        }
      }
      ev.loglik -= deaths * (std::log(s0) + shift);
      const Vector mean = s1 / s0;
      ev.grad.noalias() -= deaths * mean;
      ev.info.noalias() += deaths * (s2 / s0 - mean * mean.transpose());
    }
    return ev;
  };

  Vector beta = Vector::Zero(q);
  Eval cur = evaluate(beta);
  {
    Eigen::LLT<Matrix> check(cur.info);
    if (check.info() != Eigen::Success || cur.info.diagonal().minCoeff() <= 1e-12 * std::max(1.0, n)) {
      fit.loglik = cur.loglik;
      return fit;
    }
  }
  int iter = 0;
  for (; iter < kMaxIter; ++iter) {
    if ((cur.grad / n).cwiseAbs().maxCoeff() < kTol) {
      fit.converged = true;
      break;
    }
    const Vector step = spd_solve(cur.info, cur.grad);
    double scale = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      const Vector trial = beta + scale * step;
      Eval next = evaluate(trial);
      if (std::isfinite(next.loglik) && next.loglik >= cur.loglik) {
        beta = trial;
        cur = std::move(next);
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  fit.coefficients = beta;
  fit.loglik = cur.loglik;
  fit.covariance = spd_inverse(cur.info);
  if (robust && fit.covariance.allFinite()) {
    // Score residuals per row; cum.col(g) accumulates the risk-set compensator of pattern g.
    const Vector eta = patterns * beta;
    const double shift = eta.maxCoeff();
    Vector w(static_cast<Eigen::Index>(g_count));
    for (std::size_t g = 0; g < g_count; ++g) w(static_cast<Eigen::Index>(g)) = std::exp(eta(static_cast<Eigen::Index>(g)) - shift);
    Matrix cum = Matrix::Zero(q, static_cast<Eigen::Index>(g_count));
    Matrix meat = Matrix::Zero(q, q);
    std::vector<double> risk(g_count, 0.0);
    for (std::size_t r : rows) risk[pattern[r]] += 1.0;
    std::size_t a = 0;
    while (a < m) {
      const double t = time[rows[a]];
      std::size_t b = a;
      double deaths = 0.0;
      for (; b < m && time[rows[b]] == t; ++b) deaths += event[rows[b]] ? 1.0 : 0.0;
      Vector mean = Vector::Zero(q);
      if (deaths > 0.0) {
        double s0 = 0.0;
        for (std::size_t g = 0; g < g_count; ++g) {
          const double rr = risk[g] * w(static_cast<Eigen::Index>(g));
          s0 += rr;
          mean.noalias() += rr * patterns.row(static_cast<Eigen::Index>(g)).transpose();
        }
        mean /= s0;
        for (std::size_t g = 0; g < g_count; ++g) {
          const auto gi = static_cast<Eigen::Index>(g);
          cum.col(gi).noalias() += (deaths * w(gi) / s0) * (patterns.row(gi).transpose() - mean);
        }
      }
      for (std::size_t i = a; i < b; ++i) {
        const auto gi = static_cast<Eigen::Index>(pattern[rows[i]]);
        Vector res = -cum.col(gi);
        if (event[rows[i]]) res.noalias() += patterns.row(gi).transpose() - mean;
        meat.noalias() += res * res.transpose();
        risk[pattern[rows[i]]] -= 1.0;
      }
      a = b;
    }
    fit.covariance = fit.covariance * meat * fit.covariance;
  }
  fit.valid = fit.covariance.allFinite();
  for (Eigen::Index a = 0; a < q && fit.valid; ++a) {
    const double var = fit.covariance(a, a);
    fit.wald_p[static_cast<std::size_t>(a)] =
        var > 0.0 ? stats::normal_two_sided_p(beta(a) / std::sqrt(var)) : 1.0;
  }
  return fit;
}

LogRankResult logrank_test(std::span<const double> time, std::span<const std::uint8_t> event,
                           std::span<const std::uint8_t> group) {
  if (time.size() != event.size() || time.size() != group.size())
    throw std::invalid_argument("logrank_test: length mismatch");
  const auto order = time_order(time);
  const std::size_t n = order.size();
  double at_risk = static_cast<double>(n);
  double at_risk1 = static_cast<double>(std::count_if(group.begin(), group.end(), [](std::uint8_t g) { return g != 0; }));
  LogRankResult out;
  std::size_t i = 0;
  while (i < n) {
    const double t = time[order[i]];
    std::size_t j = i;
    double d = 0.0, d1 = 0.0, leaving = 0.0, leaving1 = 0.0;
    for (; j < n && time[order[j]] == t; ++j) {
      const std::size_t r = order[j];
      d += event[r] ? 1.0 : 0.0;
      d1 += (event[r] && group[r]) ? 1.0 : 0.0;
      leaving += 1.0;
      leaving1 += group[r] ? 1.0 : 0.0;
    }
    if (d > 0.0) {
      const double frac = at_risk1 / at_risk;
      out.observed_minus_expected += d1 - d * frac;
      if (at_risk > 1.0) out.variance += d * frac * (1.0 - frac) * (at_risk - d) / (at_risk - 1.0);
    }
    at_risk -= leaving;
    at_risk1 -= leaving1;
    i = j;
  }
  if (out.variance > 0.0) {
    out.z = out.observed_minus_expected / std::sqrt(out.variance);
    out.p_value = stats::normal_two_sided_p(out.z);
  }
  return out;
}

}  // namespace survhte
