#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "survhte/common.hpp"
#include "survhte/rule.hpp"
#include "survhte/survival.hpp"
#include "survhte/trial_data.hpp"

namespace survhte::methods {

enum class MethodId {
  kUnivariateInteraction,
  kUnivariateTTest,
  kMultivariateCox,
  kMultivariateTree,
  kMob,
  kITree,
  kSides,
  kSeqBT,
  kArdp,
  kOracle,
};

inline constexpr std::array<MethodId, 10> kAllMethods = {
    MethodId::kUnivariateInteraction, MethodId::kUnivariateTTest, MethodId::kMultivariateCox,
    MethodId::kMultivariateTree,      MethodId::kMob,             MethodId::kITree,
    MethodId::kSides,                 MethodId::kSeqBT,           MethodId::kArdp,
    MethodId::kOracle};

std::string_view method_name(MethodId id);

/// Inverse of method_name; throws std::invalid_argument for unknown names.
MethodId parse_method(std::string_view name);

/// Predictive methods answer the heterogeneity question with a
/// difference-in-differences test between their predicted subgroups on data
/// held out from the fit. The others report a p-value from the fit itself.
bool is_predictive(MethodId id);

/// Binary tree over covariates. Node 0 is the root; `left` holds rows with
/// x[variable] <= threshold.
struct TreeNode {
  int variable = -1;  // -1 at leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int depth = 0;  // root is 0
  std::size_t size = 0;
  double p_value = 1.0;  // selection p-value of the split made here
  // Leaf payloads
  double arr = 0.0;       // KM ARR at t=1 (treated minus control)
  double survival = 1.0;  // pooled KM survival at t=1

  bool is_leaf() const { return variable < 0; }
};

struct FittedTree {
  std::vector<TreeNode> nodes;
  std::size_t p = 0;  // feature count the tree was grown on

  int leaf_of(std::span<const double> x) const;

  /// Conjunction describing the path from the root to `node`.
  ThresholdRule path_rule(int node) const;

  std::vector<int> leaves() const;
};

/// I(X_i) = sum over nodes v splitting on X_i of (1/p_v)(S_v/S), p_v clamped
/// below at 1e-300.
std::vector<double> tree_feature_importance(const FittedTree& tree, std::size_t total_size, std::size_t p);

/// Membership of the leaf `leaf`.
struct TreePath {
  std::shared_ptr<const FittedTree> tree;
  int leaf = 0;
};

/// Good responder when the Cox S-learner on [W, X, W*X] predicts
/// S(1 | x, w=1) - S(1 | x, w=0) >= 0.
struct CoxArrSign {
  std::shared_ptr<const CoxFit> fit;
  std::size_t p = 0;
};

/// Same rule for a survival tree grown on (X, W): W is forced to both values.
struct TreeArrSign {
  std::shared_ptr<const FittedTree> tree;
  std::size_t p = 0;
};

using PredictorForm = std::variant<ThresholdRule, TreePath, CoxArrSign, TreeArrSign>;

/// Maps a covariate vector to 1 (good responder) or 0.
class SubgroupPredictor {
 public:
  explicit SubgroupPredictor(PredictorForm form) : form_(std::move(form)) {}

  bool predict(std::span<const double> x) const;
  Flags predict(const Matrix& covariates) const;
  double arr(std::span<const double> x) const;  // ArrSign forms only; NaN otherwise
  std::string describe() const;
  const PredictorForm& form() const { return form_; }

 private:
  PredictorForm form_;
};

struct MethodResult {
  MethodId method = MethodId::kOracle;
  std::optional<double> het_p;
  bool het_degenerate = false;
  std::optional<std::vector<double>> importance;
  std::optional<SubgroupPredictor> predictor;
  double fit_seconds = 0.0;
  std::string note;
  std::optional<Flags> training_membership;  // rule methods: membership found during fitting
};

struct MethodOptions {
  double alpha = 0.05;
  // MOB / ITree
  int tree_max_depth = 3;  // splits allowed while depth < 3
  std::size_t tree_min_child = 50;
  // multivariate survival tree
  int survtree_max_depth = 5;
  std::size_t survtree_min_leaf = 10;
  // multivariate Cox
  double ridge = 0.1;
  // SIDES
  std::size_t sides_width = 3;
  int sides_depth = 2;
  std::size_t sides_min_size = 30;
  // SeqBT
  std::size_t seqbt_max_factors = 4;
  std::size_t seqbt_min_size = 30;
  // ARDP
  double ardp_peel = 0.05;
  double ardp_floor = 0.20;
};

inline constexpr std::array<double, 4> kQuintileProbs = {0.2, 0.4, 0.6, 0.8};
inline constexpr std::array<double, 9> kDecileProbs = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

MethodResult fit_univariate_interaction(const TrialData& train, const MethodOptions& opt = {});
MethodResult fit_univariate_ttest(const TrialData& train, Rng& rng, const MethodOptions& opt = {});
MethodResult fit_multivariate_cox(const TrialData& train, const MethodOptions& opt = {});
MethodResult fit_multivariate_tree(const TrialData& train, const MethodOptions& opt = {});
MethodResult fit_mob(const TrialData& train, const MethodOptions& opt = {});
MethodResult fit_itree(const TrialData& train, const MethodOptions& opt = {});
/// het_p is the difference-in-differences p-value of the selected subgroup on
/// the search data.
MethodResult fit_sides(const TrialData& train, Rng& rng, const MethodOptions& opt = {});
MethodResult fit_seqbt(const TrialData& train, const MethodOptions& opt = {});
MethodResult fit_ardp(const TrialData& train, const MethodOptions& opt = {});
/// Throws std::invalid_argument when `train` has no ground-truth labels.
MethodResult fit_oracle(const TrialData& train, const SubgroupDefinition& truth);

/// Dispatches to the fit_* function, timing the call and turning exceptions
/// into a result with an error note.
MethodResult fit_method(MethodId id, const TrialData& train, Rng& rng, const SubgroupDefinition& truth,
                        const MethodOptions& opt = {});

/// Kaplan-Meier S(1) in the treated arm minus the control arm over `rows`;
/// NaN when an arm is empty.
double km_arr(const TrialData& data, std::span<const std::size_t> rows);

/// Importance 1/k for the k-th distinct variable of `rule`.
std::vector<double> rule_order_importance(const ThresholdRule& rule, std::size_t p);

/// Argmax with smallest-index ties; empty when every score is zero.
std::optional<std::size_t> top_variable(std::span<const double> importance);

}  // namespace survhte::methods
