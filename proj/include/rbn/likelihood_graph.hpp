#pragma once

// The likelihood graph: a shared DAG over all ground probability formulas of a
// model/data pair. Identical ground subformulas are merged, so the
// log-likelihood and its gradient cost time linear in the graph size.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rbn/dataset.hpp"
#include "rbn/formula.hpp"

namespace rbn {

inline constexpr double kProbabilityClamp = 1e-12;

struct BuildOptions {
  // Parameters held at a fixed value instead of being learned.
  std::map<std::string, double> fixed_parameters;
  // Learnable numeric relations whose atoms keep their data values.
  std::set<std::string> frozen_relations;
  bool fold_constants = true;
  // Unknown atoms nothing else depends on integrate out exactly (factor 1); when
  // set they still get an indicator and a likelihood term.
  bool keep_irrelevant_unknowns = false;
};

enum class LeafKind : std::uint8_t { Parameter, NumericAtom, Indicator };

struct Leaf {
  LeafKind kind = LeafKind::Parameter;
  std::string name;          // parameter or relation
  std::vector<int> args;     // atoms only
  std::size_t sample = 0;    // indicators only
  Interval range;            // [0,1] for indicators
  double initial = 0.0;
  std::uint32_t node = 0;
};

enum class NodeOp : std::uint8_t { Leaf, Constant, Linear, Product, Wif, Logistic, NoisyOr };

// One likelihood term: the probability of an observed atom, or of an unknown
// atom whose truth value is its indicator leaf.
struct Top {
  std::int32_t prob_node = -1;   // -1: constant probability
  double prob_constant = 0.0;
  std::uint32_t sample = 0;
  std::uint32_t relation = 0;    // index into model relations
  std::vector<int> args;
  std::int8_t observed = -1;     // 0/1, or -1 when driven by `indicator`
  std::int32_t indicator = -1;   // leaf index
};

struct GraphStats {
  std::size_t nodes = 0;  // internal + leaf + likelihood terms + root
  std::size_t edges = 0;
  std::size_t parameters = 0;
  std::size_t numeric_leaves = 0;
  std::size_t indicators = 0;
  std::size_t observed_terms = 0;  // including those folded into constants
  std::size_t unknown_terms = 0;
};

class LikelihoodGraph {
 public:
  // Throws ModelError (cyclic ground dependencies), EvaluationError (e.g. an
  // empty mean), DataError or NumericalError.
  static LikelihoodGraph build(const Model& model, const DataSet& data,
                               const BuildOptions& options = {});

  const Model& model() const { return *model_; }
  std::size_t node_count() const { return op_.size(); }
  const std::vector<Leaf>& leaves() const { return leaves_; }
  const std::vector<Top>& tops() const { return tops_; }
  // Log-likelihood of observed atoms whose probability folded to a constant.
  double constant_log_likelihood() const { return constant_ll_; }

  std::optional<std::size_t> find_parameter(std::string_view name) const;
  std::optional<std::size_t> find_numeric(std::string_view relation, std::span<const int> args) const;
  std::optional<std::size_t> find_indicator(std::size_t sample, std::string_view relation,
                                            std::span<const int> args) const;
  std::vector<std::size_t> leaves_of(LeafKind kind) const;

  std::vector<double> initial_values() const;
  GraphStats stats() const;
  std::string to_dot() const;

  // Node structure, for evaluators and tests.
  NodeOp op(std::uint32_t node) const { return op_[node]; }
  std::span<const std::uint32_t> children(std::uint32_t node) const {
    return {children_.data() + child_begin_[node], children_.data() + child_begin_[node + 1]};
  }

 private:
  friend class Evaluator;
  friend class GraphBuilder;

  const Model* model_ = nullptr;
  std::vector<NodeOp> op_;
  std::vector<std::uint8_t> mask_;  // Wif: bit 0 then-branch is a node, bit 1 else-branch
  std::vector<double> k0_, k1_, k2_;
  std::vector<std::uint32_t> child_begin_{0};
  std::vector<std::uint32_t> children_;
  std::vector<double> weights_;  // parallel to children_ (Linear)
  std::vector<std::int32_t> leaf_of_node_;
  std::vector<std::uint32_t> parent_begin_;
  std::vector<std::uint32_t> parents_;

  std::vector<Leaf> leaves_;
  std::vector<Top> tops_;
  double constant_ll_ = 0.0;
  std::size_t folded_terms_ = 0;  // observed atoms with constant probability
  std::unordered_map<std::string, std::size_t> leaf_index_;
};

// Mutable valuation of a graph's leaves with incremental re-evaluation. One
// per thread; the graph itself is shared read-only.
class Evaluator {
 public:
  explicit Evaluator(const LikelihoodGraph& graph);

  const LikelihoodGraph& graph() const { return *g_; }

  double leaf_value(std::size_t leaf) const { return leaf_values_[leaf]; }
  std::span<const double> leaf_values() const { return leaf_values_; }
  void set_leaf_value(std::size_t leaf, double value);
  void set_leaf_values(std::span<const double> values);

  double log_likelihood();
  // d log L / d leaf, per leaf. For indicators this treats the 0/1 value as
  // continuous; their own term contributes log p - log(1 - p).
  const std::vector<double>& gradient();

  // Current probability of a term.
  double probability(std::size_t top);
  double node_value(std::uint32_t node);

  std::size_t last_recomputed() const { return last_recomputed_; }
  std::size_t edge_visits() const { return edge_visits_; }
  void reset_counters() { edge_visits_ = 0; }

 private:
  void mark_dirty(std::uint32_t node);
  void refresh();
  double compute(std::uint32_t node);

  const LikelihoodGraph* g_;
  std::vector<double> leaf_values_;
  std::vector<double> values_;
  std::vector<std::uint8_t> dirty_;
  std::vector<std::uint32_t> dirty_list_;
  bool all_dirty_ = true;
  std::vector<double> adjoint_;
  std::vector<double> gradient_;
  std::vector<double> scratch_;
  std::size_t last_recomputed_ = 0;
  std::size_t edge_visits_ = 0;
};

// Log of the clamped term probability for truth value t, and its derivative
// with respect to p (zero where the clamp is active).
double term_log(double p, bool t);
double term_log_derivative(double p, bool t);

}  // namespace rbn
