#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "methods_internal.hpp"

namespace survhte::methods {

namespace {

constexpr std::array<std::string_view, 10> kNames = {
    "univariate_interaction", "univariate_ttest", "multivariate_cox", "multivariate_tree", "mob",
    "itree",                  "sides",            "seqbt",            "ardp",              "oracle"};

}  // namespace

std::string_view method_name(MethodId id) { return kNames[static_cast<std::size_t>(id)]; }

MethodId parse_method(std::string_view name) {
  for (std::size_t k = 0; k < kNames.size(); ++k)
    if (kNames[k] == name) return static_cast<MethodId>(k);
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

bool is_predictive(MethodId id) {
  switch (id) {
    case MethodId::kMultivariateCox:
    case MethodId::kMultivariateTree:
    case MethodId::kSides:
    case MethodId::kSeqBT:
    case MethodId::kArdp:
      return true;
    default:
      return false;
  }
}

int FittedTree::leaf_of(std::span<const double> x) const {
  int k = 0;
  while (!nodes[static_cast<std::size_t>(k)].is_leaf()) {
    const TreeNode& nd = nodes[static_cast<std::size_t>(k)];
    k = x[static_cast<std::size_t>(nd.variable)] <= nd.threshold ? nd.left : nd.right;
  }
  return k;
}

ThresholdRule FittedTree::path_rule(int node) const {
  std::vector<int> parent(nodes.size(), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k].is_leaf()) continue;
    parent[static_cast<std::size_t>(nodes[k].left)] = static_cast<int>(k);
    parent[static_cast<std::size_t>(nodes[k].right)] = static_cast<int>(k);
  }
  ThresholdRule rule;
  for (int k = node; parent[static_cast<std::size_t>(k)] >= 0; k = parent[static_cast<std::size_t>(k)]) {
    const TreeNode& up = nodes[static_cast<std::size_t>(parent[static_cast<std::size_t>(k)])];
    // Thresholds sit strictly between observed values, so ">" is written ">=".
    rule.clauses.push_back({static_cast<std::size_t>(up.variable), up.threshold,
                            up.left == k ? Direction::kLessEqual : Direction::kGreaterEqual});
  }
  std::reverse(rule.clauses.begin(), rule.clauses.end());
  return rule;
}

std::vector<int> FittedTree::leaves() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    if (nodes[k].is_leaf()) out.push_back(static_cast<int>(k));
  return out;
}

std::vector<double> tree_feature_importance(const FittedTree& tree, std::size_t total_size, std::size_t p) {
  std::vector<double> imp(p, 0.0);
  for (const TreeNode& nd : tree.nodes) {
    if (nd.is_leaf()) continue;
    const auto v = static_cast<std::size_t>(nd.variable);
    if (v >= p) continue;
    imp[v] += (1.0 / detail::clamp_tiny(nd.p_value)) * static_cast<double>(nd.size) / static_cast<double>(total_size);
  }
  return imp;
}

namespace {

double cox_arr(const CoxArrSign& f, std::span<const double> x) {
  const std::size_t p = f.p;
  std::vector<double> row(2 * p + 1, 0.0);
  for (std::size_t j = 0; j < p; ++j) row[1 + j] = x[j];
  const double s0 = predict_survival(*f.fit, row, 1.0);
  row[0] = 1.0;
  for (std::size_t j = 0; j < p; ++j) row[1 + p + j] = x[j];
  const double s1 = predict_survival(*f.fit, row, 1.0);
  return s1 - s0;
}

double tree_arr(const TreeArrSign& f, std::span<const double> x) {
  std::vector<double> row(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(f.p));
  row.push_back(1.0);
  const double s1 = f.tree->nodes[static_cast<std::size_t>(f.tree->leaf_of(row))].survival;
  row.back() = 0.0;
  const double s0 = f.tree->nodes[static_cast<std::size_t>(f.tree->leaf_of(row))].survival;
  return s1 - s0;
}

}  // namespace

double SubgroupPredictor::arr(std::span<const double> x) const {
  if (const auto* c = std::get_if<CoxArrSign>(&form_)) return cox_arr(*c, x);
  if (const auto* t = std::get_if<TreeArrSign>(&form_)) return tree_arr(*t, x);
  return std::numeric_limits<double>::quiet_NaN();
}

bool SubgroupPredictor::predict(std::span<const double> x) const {
  if (const auto* r = std::get_if<ThresholdRule>(&form_)) return r->contains(x);
  if (const auto* t = std::get_if<TreePath>(&form_)) return t->tree->leaf_of(x) == t->leaf;
  return arr(x) >= 0.0;
}

Flags SubgroupPredictor::predict(const Matrix& covariates) const {
  const auto n = static_cast<std::size_t>(covariates.rows());
  const auto p = static_cast<std::size_t>(covariates.cols());
  Flags out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = predict(std::span<const double>(covariates.data() + i * p, p)) ? 1 : 0;
  return out;
}

std::string SubgroupPredictor::describe() const {
  if (const auto* r = std::get_if<ThresholdRule>(&form_)) return r->describe();
  if (const auto* t = std::get_if<TreePath>(&form_))
    return "leaf " + std::to_string(t->leaf) + ": " + t->tree->path_rule(t->leaf).describe();
  if (std::holds_alternative<CoxArrSign>(form_)) return "cox_arr(t=1)>=0";
  return "tree_arr(t=1)>=0";
}

double km_arr(const TrialData& data, std::span<const std::size_t> rows) {
  std::array<std::vector<double>, 2> t;
  std::array<Flags, 2> e;
  for (std::size_t r : rows) {
    const int a = data.treatment[r] ? 1 : 0;
    t[a].push_back(data.time[r]);
    e[a].push_back(data.event[r]);
  }
  if (t[0].empty() || t[1].empty()) return std::numeric_limits<double>::quiet_NaN();
  return kaplan_meier(t[1], e[1]).at(1.0) - kaplan_meier(t[0], e[0]).at(1.0);
}

std::vector<double> rule_order_importance(const ThresholdRule& rule, std::size_t p) {
  std::vector<double> imp(p, 0.0);
  double rank = 0.0;
  for (const Clause& c : rule.clauses) {
    if (c.index >= p || imp[c.index] > 0.0) continue;
    rank += 1.0;
    imp[c.index] = 1.0 / rank;
  }
  return imp;
}

std::optional<std::size_t> top_variable(std::span<const double> importance) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < importance.size(); ++j) {
    if (!(importance[j] > 0.0)) continue;
    if (!best || importance[j] > importance[*best]) best = j;
  }
  return best;
}

namespace detail {

ThresholdRule oriented_median_rule(const TrialData& d, std::size_t j) {
  std::vector<double> col = d.column(j);
  std::sort(col.begin(), col.end());
  const double s = stats::split_threshold_sorted(col, 0.5);
  ThresholdRule rule;
  if (std::isnan(s)) return rule;  // constant column: everyone is labeled good
  std::vector<std::size_t> low, high;
  for (std::size_t i = 0; i < d.n(); ++i) (d.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= s ? low : high).push_back(i);
  const double arr_low = nan_to_low(km_arr(d, low));
  const double arr_high = nan_to_low(km_arr(d, high));
  rule.clauses.push_back({j, s, arr_low > arr_high ? Direction::kLessEqual : Direction::kGreaterEqual});
  return rule;
}

}  // namespace detail

MethodResult fit_method(MethodId id, const TrialData& train, Rng& rng, const SubgroupDefinition& truth,
                        const MethodOptions& opt) {
  detail::Stopwatch clock;
  MethodResult res;
  try {
    switch (id) {
      case MethodId::kUnivariateInteraction: res = fit_univariate_interaction(train, opt); break;
      case MethodId::kUnivariateTTest: res = fit_univariate_ttest(train, rng, opt); break;
      case MethodId::kMultivariateCox: res = fit_multivariate_cox(train, opt); break;
      case MethodId::kMultivariateTree: res = fit_multivariate_tree(train, opt); break;
      case MethodId::kMob: res = fit_mob(train, opt); break;
      case MethodId::kITree: res = fit_itree(train, opt); break;
      case MethodId::kSides: res = fit_sides(train, rng, opt); break;
      case MethodId::kSeqBT: res = fit_seqbt(train, opt); break;
      case MethodId::kArdp: res = fit_ardp(train, opt); break;
      case MethodId::kOracle: res = fit_oracle(train, truth); break;
    }
  } catch (const std::exception& ex) {
    res = MethodResult{};
    res.note = std::string("error: ") + ex.what();
  }
  res.method = id;
  res.fit_seconds = clock.seconds();
  return res;
}

}  // namespace survhte::methods
