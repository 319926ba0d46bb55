#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "methods_internal.hpp"

namespace survhte::methods {

namespace {

struct SplitChoice {
  bool found = false;
  std::size_t variable = 0;
  double threshold = 0.0;
  double p_value = 1.0;  // adjusted selection p-value
};

double value(const TrialData& d, std::size_t i, std::size_t j) {
  return d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

std::vector<double> node_values(const TrialData& d, const std::vector<std::size_t>& rows, std::size_t j) {
  std::vector<double> v;
  v.reserve(rows.size());
  for (std::size_t r : rows) v.push_back(value(d, r, j));
  return v;
}

// Rows of `rows` (kept in ascending time order) on each side of a split.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(const TrialData& d,
                                                                        const std::vector<std::size_t>& rows,
                                                                        std::size_t j, double threshold) {
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t r : rows) (value(d, r, j) <= threshold ? out.first : out.second).push_back(r);
  return out;
}

// Grows a binary tree by recursive selection. `select` returns the split for
// a node's rows (ascending time order) or found=false.
template <class Select>
FittedTree grow(const TrialData& d, const std::vector<std::size_t>& all_rows, int max_depth, Select&& select,
                double& root_p) {
  FittedTree tree;
  tree.p = d.p();
  struct Pending {
    int node;
    std::vector<std::size_t> rows;
  };
  tree.nodes.push_back(TreeNode{});
  tree.nodes[0].size = all_rows.size();
  std::vector<Pending> stack{{0, all_rows}};
  root_p = 1.0;
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const int depth = tree.nodes[static_cast<std::size_t>(cur.node)].depth;
    SplitChoice split;
    if (depth < max_depth || cur.node == 0) split = select(cur.rows);
    if (cur.node == 0) root_p = split.p_value;
    if (split.found && depth < max_depth) {
      auto [left, right] = partition(d, cur.rows, split.variable, split.threshold);
      const int li = static_cast<int>(tree.nodes.size());
      TreeNode& nd = tree.nodes[static_cast<std::size_t>(cur.node)];
      nd.variable = static_cast<int>(split.variable);
      nd.threshold = split.threshold;
      nd.p_value = split.p_value;
      nd.left = li;
      nd.right = li + 1;
      TreeNode child;
      child.depth = depth + 1;
      child.size = left.size();
      tree.nodes.push_back(child);
      child.size = right.size();
      tree.nodes.push_back(child);
      // Right pushed first so the left subtree is expanded first.
      stack.push_back({li + 1, std::move(right)});
      stack.push_back({li, std::move(left)});
    } else {
      TreeNode& nd = tree.nodes[static_cast<std::size_t>(cur.node)];
      nd.arr = km_arr(d, cur.rows);
      std::vector<double> t;
      Flags e;
      for (std::size_t r : cur.rows) {
        t.push_back(d.time[r]);
        e.push_back(d.event[r]);
      }
      nd.survival = kaplan_meier(t, e).at(1.0);
    }
  }
  return tree;
}

// Leaf with the largest KM ARR(1); smallest node index on ties.
int best_leaf(const FittedTree& tree) {
  int best = -1;
  double best_arr = -std::numeric_limits<double>::infinity();
  for (int leaf : tree.leaves()) {
    const double a = detail::nan_to_low(tree.nodes[static_cast<std::size_t>(leaf)].arr);
    if (best < 0 || a > best_arr) {
      best = leaf;
      best_arr = a;
    }
  }
  return best;
}

MethodResult tree_result(const TrialData& d, FittedTree tree, double root_p) {
  MethodResult res;
  res.het_p = stats::clamp_p(root_p);
  res.importance = tree_feature_importance(tree, d.n(), d.p());
  auto shared = std::make_shared<const FittedTree>(std::move(tree));
  res.predictor = SubgroupPredictor(TreePath{shared, best_leaf(*shared)});
  return res;
}

MethodResult unsplittable(const TrialData& d, const std::string& why) {
  MethodResult res;
  res.het_p = 1.0;
  res.importance = std::vector<double>(d.p(), 0.0);
  res.note = why;
  return res;
}

}  // namespace

MethodResult fit_mob(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  const std::size_t p = train.p();
  if (train.n() < 2 * opt.tree_min_child) return unsplittable(train, "fewer than two minimal children");
  if (train.event_count() == 0) return unsplittable(train, "no events");
  const std::vector<std::size_t> order = ascending_time_order(train.time);

  auto select = [&](const std::vector<std::size_t>& rows) {
    SplitChoice out;
    const std::size_t m = rows.size();
    if (m < 2 * opt.tree_min_child) return out;
    Matrix w(static_cast<Eigen::Index>(m), 1);
    std::vector<double> t(m);
    Flags e(m);
    for (std::size_t k = 0; k < m; ++k) {
      w(static_cast<Eigen::Index>(k), 0) = train.treatment[rows[k]];
      t[k] = train.time[rows[k]];
      e[k] = train.event[rows[k]];
    }
    CoxFit fit;
    try {
      fit = fit_cox(w, t, e);
    } catch (const std::exception&) {
      return out;
    }
    const Matrix resid = cox_score_residuals(w, t, e, fit);
    std::vector<double> r(m);
    for (std::size_t k = 0; k < m; ++k) r[k] = resid(static_cast<Eigen::Index>(k), 0);
    std::size_t best_j = 0;
    double best_p = 2.0;
    for (std::size_t j = 0; j < p; ++j) {
      const double rho = stats::pearson(node_values(train, rows, j), r);
      double pj = 1.0;
      if (!std::isnan(rho)) {
        const double dof = static_cast<double>(m) - 2.0;
        const double denom = std::max(1.0 - rho * rho, 1e-300);
        pj = stats::student_two_sided_p(rho * std::sqrt(dof / denom), dof);
      }
      if (pj < best_p) {
        best_p = pj;
        best_j = j;
      }
    }
    out.variable = best_j;
    out.p_value = stats::clamp_p(best_p * static_cast<double>(p));
    if (!(out.p_value < opt.alpha)) return out;
    // Split point: decile maximizing the summed child Cox(W) log-likelihoods.
    double best_ll = -std::numeric_limits<double>::infinity();
    for (double c : detail::candidate_thresholds(node_values(train, rows, best_j), kDecileProbs)) {
      auto [left, right] = partition(train, rows, best_j, c);
      if (left.size() < opt.tree_min_child || right.size() < opt.tree_min_child) continue;
      const double ll = detail::treatment_fit(train, left).loglik + detail::treatment_fit(train, right).loglik;
      if (ll > best_ll) {
        best_ll = ll;
        out.threshold = c;
        out.found = true;
      }
    }
    return out;
  };
  double root_p = 1.0;
  FittedTree tree = grow(train, order, opt.tree_max_depth, select, root_p);
  return tree_result(train, std::move(tree), root_p);
}

MethodResult fit_itree(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  const std::size_t p = train.p(), n = train.n();
  if (n < 2 * opt.tree_min_child) return unsplittable(train, "fewer than two minimal children");
  if (train.event_count() == 0) return unsplittable(train, "no events");
  const std::vector<std::size_t> order = ascending_time_order(train.time);
  const double tests = static_cast<double>(p * kQuintileProbs.size());

  auto select = [&](const std::vector<std::size_t>& rows) {
    SplitChoice out;
    Flags z(n, 0);
    double best_p = 2.0;
    for (std::size_t j = 0; j < p; ++j) {
      for (double c : detail::candidate_thresholds(node_values(train, rows, j), kQuintileProbs)) {
        std::size_t left = 0;
        for (std::size_t r : rows) {
          z[r] = value(train, r, j) <= c;
          left += z[r];
        }
        if (left < opt.tree_min_child || rows.size() - left < opt.tree_min_child) continue;
        const PatternCoxFit fit = detail::interaction_fit(train, z, rows, /*robust=*/true);
        const double pj = fit.valid ? fit.wald_p[2] : 1.0;
        if (pj < best_p) {
          best_p = pj;
          out.variable = j;
          out.threshold = c;
          out.found = true;
        }
      }
    }
    out.p_value = out.found ? stats::clamp_p(best_p * tests) : 1.0;
    out.found = out.found && out.p_value < opt.alpha;
    return out;
  };
  double root_p = 1.0;
  FittedTree tree = grow(train, order, opt.tree_max_depth, select, root_p);
  return tree_result(train, std::move(tree), root_p);
}

// ---------------------------------------------------------------------------
// Survival tree on (X, W) with log-rank splits

namespace {

struct SurvTreeBuilder {
  const TrialData& d;
  const MethodOptions& opt;
  std::size_t p;  // W is feature p

  double feature(std::size_t i, std::size_t j) const { return j < p ? value(d, i, j) : d.treatment[i]; }

  // Best log-rank split of `rows` (ascending time order).
  SplitChoice best_split(const std::vector<std::size_t>& rows) const {
    SplitChoice out;
    const std::size_t m = rows.size();
    if (m < 2 * opt.survtree_min_leaf) return out;
    // Distinct-time groups over the time-ordered rows.
    std::vector<std::size_t> group_of(m);
    std::vector<double> deaths, at_risk;
    std::size_t g = 0;
    for (std::size_t k = 0; k < m;) {
      std::size_t j = k;
      double dd = 0.0;
      for (; j < m && d.time[rows[j]] == d.time[rows[k]]; ++j) {
        group_of[j] = g;
        dd += d.event[rows[j]] ? 1.0 : 0.0;
      }
      deaths.push_back(dd);
      at_risk.push_back(static_cast<double>(m - k));
      k = j;
      ++g;
    }
    const std::size_t groups = deaths.size();
    std::vector<double> left_in_group(groups);

    double best_stat = 0.0;
    std::vector<std::pair<double, std::size_t>> sorted(m);  // (feature value, time position)
    for (std::size_t j = 0; j <= p; ++j) {
      for (std::size_t k = 0; k < m; ++k) sorted[k] = {feature(rows[k], j), k};
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      std::fill(left_in_group.begin(), left_in_group.end(), 0.0);
      std::vector<double> left_deaths(groups, 0.0);
      for (std::size_t k = 0; k + 1 < m; ++k) {
        const std::size_t pos = sorted[k].second;
        left_in_group[group_of[pos]] += 1.0;
        if (d.event[rows[pos]]) left_deaths[group_of[pos]] += 1.0;
        const std::size_t left_n = k + 1;
        if (left_n < opt.survtree_min_leaf) continue;
        if (m - left_n < opt.survtree_min_leaf) break;
        if (!(sorted[k].first < sorted[k + 1].first)) continue;
        double oe = 0.0, var = 0.0, left_risk = static_cast<double>(left_n);
        for (std::size_t q = 0; q < groups; ++q) {
          if (deaths[q] > 0.0) {
            const double frac = left_risk / at_risk[q];
            oe += left_deaths[q] - deaths[q] * frac;
            if (at_risk[q] > 1.0) var += deaths[q] * frac * (1.0 - frac) * (at_risk[q] - deaths[q]) / (at_risk[q] - 1.0);
          }
          left_risk -= left_in_group[q];
        }
        if (!(var > 0.0)) continue;
        const double stat = oe * oe / var;
        if (stat > best_stat) {
          best_stat = stat;
          out.found = true;
          out.variable = j;
          out.threshold = 0.5 * (sorted[k].first + sorted[k + 1].first);
        }
      }
    }
    out.p_value = out.found ? std::erfc(std::sqrt(best_stat / 2.0)) : 1.0;
    return out;
  }
};

}  // namespace

MethodResult fit_multivariate_tree(const TrialData& train, const MethodOptions& opt) {
  train.validate();
  const std::size_t p = train.p();
  if (train.n() < 2 * opt.survtree_min_leaf) throw std::invalid_argument("multivariate tree needs 2 * min-leaf samples");
  // Augment the covariates with W so the tree can split on it.
  TrialData aug = train;
  aug.covariates.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(p + 1));
  for (std::size_t i = 0; i < train.n(); ++i)
    aug.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = train.treatment[i];
  SurvTreeBuilder builder{aug, opt, p};
  auto select = [&](const std::vector<std::size_t>& rows) { return builder.best_split(rows); };
  double root_p = 1.0;
  FittedTree tree = grow(aug, ascending_time_order(aug.time), opt.survtree_max_depth, select, root_p);
  tree.p = p + 1;
  MethodResult res;
  res.predictor = SubgroupPredictor(TreeArrSign{std::make_shared<const FittedTree>(std::move(tree)), p});
  return res;
}

}  // namespace survhte::methods
