#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "methods_internal.hpp"
#include "survhte/did_test.hpp"

namespace survhte::methods {

namespace {

double value(const TrialData& d, std::size_t i, std::size_t j) {
  return d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

std::vector<double> member_values(const TrialData& d, const Flags& member, std::size_t j) {
  std::vector<double> v;
  for (std::size_t i = 0; i < d.n(); ++i)
    if (member[i]) v.push_back(value(d, i, j));
  return v;
}

Flags apply_clause(const TrialData& d, const Flags& member, const Clause& c) {
  Flags out(member.size(), 0);
  for (std::size_t i = 0; i < d.n(); ++i) out[i] = member[i] && c.holds(d.row(i));
  return out;
}

std::size_t count(const Flags& f) { return static_cast<std::size_t>(std::count(f.begin(), f.end(), std::uint8_t{1})); }

MethodResult rule_result(const TrialData& d, const ThresholdRule& rule, Flags membership) {
  MethodResult res;
  res.importance = rule_order_importance(rule, d.p());
  res.predictor = SubgroupPredictor(rule);
  res.training_membership = std::move(membership);
  return res;
}

// ---------------------------------------------------------------------------
// SIDES

struct SidesCandidate {
  ThresholdRule rule;
  Flags member;
  double benefit = 0.0;
  double score = 0.0;
  std::vector<std::size_t> used;
};

// Best `width` splits of the parent's members by differential effect, each
// represented by its child with the larger treatment benefit.
std::vector<SidesCandidate> sides_level(const TrialData& d, const std::vector<std::size_t>& order,
                                        const SidesCandidate& parent, const MethodOptions& opt) {
  std::vector<SidesCandidate> found;
  for (std::size_t j = 0; j < d.p(); ++j) {
    if (std::find(parent.used.begin(), parent.used.end(), j) != parent.used.end()) continue;
    for (double c : detail::candidate_thresholds(member_values(d, parent.member, j), kQuintileProbs)) {
      const Clause low{j, c, Direction::kLessEqual};
      const Clause high{j, c, Direction::kGreaterEqual};
      Flags ml = apply_clause(d, parent.member, low);
      Flags mh = apply_clause(d, parent.member, high);
      if (count(ml) < opt.sides_min_size || count(mh) < opt.sides_min_size) continue;
      const double zl = detail::benefit_z(d, detail::masked_order(order, ml));
      const double zh = detail::benefit_z(d, detail::masked_order(order, mh));
      if (std::isnan(zl) || std::isnan(zh)) continue;
      SidesCandidate cand;
      cand.score = std::abs(zl - zh) / std::sqrt(2.0);
      const bool take_low = zl >= zh;
      cand.benefit = take_low ? zl : zh;
      cand.member = take_low ? std::move(ml) : std::move(mh);
      cand.rule = parent.rule;
      cand.rule.clauses.push_back(take_low ? low : high);
      cand.used = parent.used;
      cand.used.push_back(j);
      found.push_back(std::move(cand));
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const SidesCandidate& a, const SidesCandidate& b) { return a.score > b.score; });
  if (found.size() > opt.sides_width) found.resize(opt.sides_width);
  return found;
}

}  // namespace

MethodResult fit_sides(const TrialData& train, Rng& rng, const MethodOptions& opt) {
  train.validate();
  const std::vector<std::size_t> order = ascending_time_order(train.time);
  SidesCandidate root;
  root.member.assign(train.n(), 1);
  std::vector<SidesCandidate> frontier{root};
  std::vector<SidesCandidate> terminal;
  for (int level = 0; level < opt.sides_depth && !frontier.empty(); ++level) {
    std::vector<SidesCandidate> next;
    for (SidesCandidate& parent : frontier) {
      std::vector<SidesCandidate> kids = sides_level(train, order, parent, opt);
      if (kids.empty()) {
        if (level > 0) terminal.push_back(std::move(parent));
        continue;
      }
      for (auto& k : kids) next.push_back(std::move(k));
    }
    frontier = std::move(next);
  }
  for (auto& c : frontier) terminal.push_back(std::move(c));

  if (terminal.empty()) {
    MethodResult res;
    res.het_p = uniform_open(rng);
    res.het_degenerate = true;
    res.note = "no candidate subgroup of minimal size";
    return res;
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < terminal.size(); ++k)
    if (terminal[k].benefit > terminal[best].benefit) best = k;
  MethodResult res = rule_result(train, terminal[best].rule, terminal[best].member);
  const TestResult t = diff_in_diff_test(train, terminal[best].member, rng);
  res.het_p = t.p_value;
  res.het_degenerate = t.degenerate;
  return res;
}

MethodResult fit_seqbt(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  const std::size_t n = train.n();
  const std::vector<std::size_t> order = ascending_time_order(train.time);
  ThresholdRule rule;
  Flags member(n, 1);
  double incumbent = 1.0;
  double incumbent_coef = 0.0;
  for (std::size_t step = 0; step < opt.seqbt_max_factors; ++step) {
    double best_p = 2.0;
    double best_coef = 0.0;
    Clause best_clause;
    Flags best_member;
    for (std::size_t j = 0; j < train.p(); ++j) {
      for (double c : detail::candidate_thresholds(member_values(train, member, j), kQuintileProbs)) {
        for (Direction dir : {Direction::kLessEqual, Direction::kGreaterEqual}) {
          const Clause clause{j, c, dir};
          Flags cand = apply_clause(train, member, clause);
          const std::size_t size = count(cand);
          if (size < opt.seqbt_min_size || n - size < opt.seqbt_min_size) continue;
          const PatternCoxFit fit = detail::interaction_fit(train, cand, order);
          if (!fit.valid) continue;
          if (fit.wald_p[2] < best_p) {
            best_p = fit.wald_p[2];
            best_coef = fit.coefficients(2);
            best_clause = clause;
            best_member = std::move(cand);
          }
        }
      }
    }
    if (best_p > 1.0 || (step > 0 && !(best_p < incumbent))) break;
    rule.clauses.push_back(best_clause);
    member = std::move(best_member);
    incumbent = best_p;
    incumbent_coef = best_coef;
  }
  if (rule.clauses.empty()) {
    MethodResult res;
    res.note = "no valid rule of minimal size";
    return res;
  }
  // A negative interaction means treatment helps more inside the rule.
  if (incumbent_coef > 0.0) {
    rule.complement = true;
    for (auto& f : member) f = !f;
  }
  return rule_result(train, rule, std::move(member));
}

MethodResult fit_ardp(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  const std::size_t n = train.n();
  if (n < 50) throw std::invalid_argument("ARDP needs at least 50 samples");
  const std::vector<std::size_t> order = ascending_time_order(train.time);
  const double floor_size = opt.ardp_floor * static_cast<double>(n);
  ThresholdRule rule;
  Flags member(n, 1);
  std::size_t size = n;
  for (;;) {
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(opt.ardp_peel * static_cast<double>(size)));
    if (static_cast<double>(size - k) < floor_size) break;
    double best_z = -std::numeric_limits<double>::infinity();
    Clause best_clause;
    Flags best_member;
    for (std::size_t j = 0; j < train.p(); ++j) {
      std::vector<double> v = member_values(train, member, j);
      std::sort(v.begin(), v.end());
      std::vector<Clause> peels;
      if (v[k - 1] < v[k]) peels.push_back({j, 0.5 * (v[k - 1] + v[k]), Direction::kGreaterEqual});
      if (v[size - k - 1] < v[size - k]) peels.push_back({j, 0.5 * (v[size - k - 1] + v[size - k]), Direction::kLessEqual});
      for (const Clause& c : peels) {
        Flags cand = apply_clause(train, member, c);
        const double z = detail::benefit_z(train, detail::masked_order(order, cand));
        if (std::isnan(z)) continue;
        if (z > best_z) {
          best_z = z;
          best_clause = c;
          best_member = std::move(cand);
        }
      }
    }
    if (best_member.empty()) break;
    auto same = std::find_if(rule.clauses.begin(), rule.clauses.end(), [&](const Clause& c) {
      return c.index == best_clause.index && c.direction == best_clause.direction;
    });
    if (same != rule.clauses.end())
      same->threshold = best_clause.threshold;
    else
      rule.clauses.push_back(best_clause);
    member = std::move(best_member);
    size = count(member);
  }
  return rule_result(train, rule, std::move(member));
}

}  // namespace survhte::methods
