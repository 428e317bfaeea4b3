#pragma once

// Probability formulas: abstract syntax, models and evaluation semantics.

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace rbn {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Interval {
  double lo = -kInfinity;
  double hi = kInfinity;

  bool contains(double x) const { return x >= lo && x <= hi; }
  double clip(double x) const { return x < lo ? lo : (x > hi ? hi : x); }
  bool bounded() const { return lo > -kInfinity && hi < kInfinity; }
  bool operator==(const Interval&) const = default;
};

enum class RelationKind { BooleanInput, NumericInput, Probabilistic };

std::string_view to_string(RelationKind kind);

struct RelationDecl {
  std::string name;
  int arity = 0;
  RelationKind kind = RelationKind::BooleanInput;
  Interval range;  // meaningful for numeric inputs only
  bool learnable = false;

  bool operator==(const RelationDecl&) const = default;
};

struct ParameterDecl {
  std::string name;
  Interval range;

  bool operator==(const ParameterDecl&) const = default;
};

enum class CombinationFunction { Sum, LogisticRegression, Mean, NoisyOr };
enum class BinaryOp { Plus, Minus, Times };

std::string_view to_string(CombinationFunction fn);
std::optional<CombinationFunction> combination_function_from_name(std::string_view name);

// One conjunct of a WHERE guard. Guards only test Boolean input relations and
// (in)equality of logical variables.
struct GuardAtom {
  enum class Kind { Relation, Equal, NotEqual };
  Kind kind = Kind::Relation;
  bool negated = false;
  std::string relation;            // Kind::Relation only
  std::vector<std::string> vars;   // relation args, or the two compared variables

  bool operator==(const GuardAtom&) const = default;
};
using Guard = std::vector<GuardAtom>;

class Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Constant {
  double value = 0.0;
};
struct ParamRef {
  std::string name;
};
struct AtomRef {
  std::string relation;
  std::vector<std::string> args;
};
struct Binary {
  BinaryOp op = BinaryOp::Plus;
  FormulaPtr lhs;
  FormulaPtr rhs;
};
struct Wif {
  FormulaPtr cond;
  FormulaPtr then_branch;
  FormulaPtr else_branch;
};
struct Combine {
  std::vector<FormulaPtr> bodies;
  CombinationFunction fn = CombinationFunction::Sum;
  std::vector<std::string> bound;
  Guard where;
};

class Formula {
 public:
  using Node = std::variant<Constant, ParamRef, AtomRef, Binary, Wif, Combine>;

  explicit Formula(Node node) : node_(std::move(node)) {}

  const Node& node() const { return node_; }

  template <class T>
  const T* as() const {
    return std::get_if<T>(&node_);
  }

 private:
  Node node_;
};

FormulaPtr make_constant(double value);
FormulaPtr make_param(std::string name);
FormulaPtr make_atom(std::string relation, std::vector<std::string> args);
FormulaPtr make_binary(BinaryOp op, FormulaPtr lhs, FormulaPtr rhs);
FormulaPtr make_wif(FormulaPtr cond, FormulaPtr then_branch, FormulaPtr else_branch);
FormulaPtr make_combine(std::vector<FormulaPtr> bodies, CombinationFunction fn,
                        std::vector<std::string> bound = {}, Guard where = {});

bool structurally_equal(const Formula& a, const Formula& b);

std::set<std::string> free_variables(const Formula& f);
std::set<std::string> guard_variables(const Guard& g);

// Relations (by name) referenced anywhere in `f`, guards excluded.
std::set<std::string> referenced_relations(const Formula& f);

struct Assignment {
  std::string relation;
  std::vector<std::string> vars;
  Guard guard;  // head guard: ground atoms failing it are outside the model
  FormulaPtr formula;
};

// A validated model. Immutable once created.
class Model {
 public:
  // Throws ModelError on any inconsistency.
  static Model create(std::vector<RelationDecl> relations, std::vector<ParameterDecl> parameters,
                      std::vector<Assignment> assignments);

  const std::vector<RelationDecl>& relations() const { return relations_; }
  const std::vector<ParameterDecl>& parameters() const { return parameters_; }
  const std::vector<Assignment>& assignments() const { return assignments_; }

  const RelationDecl* find_relation(std::string_view name) const;
  const ParameterDecl* find_parameter(std::string_view name) const;
  const Assignment* assignment_for(std::string_view relation) const;

 private:
  std::vector<RelationDecl> relations_;
  std::vector<ParameterDecl> parameters_;
  std::vector<Assignment> assignments_;
};

bool structurally_equal(const Model& a, const Model& b);

// Values of everything a formula may mention. Boolean atoms evaluate to 0/1.
class EvaluationContext {
 public:
  virtual ~EvaluationContext() = default;
  virtual std::size_t domain_size() const = 0;
  virtual double parameter_value(const std::string& name) const = 0;
  virtual double atom_value(const std::string& relation, std::span<const int> args) const = 0;
};

// Logical variable -> object id. Small, so a flat vector beats a map here.
// Variable names are views into the formula/assignment that owns them.
class Binding {
 public:
  Binding() = default;
  Binding(const std::vector<std::string>& vars, std::span<const int> objects);

  std::optional<int> lookup(std::string_view var) const;
  int at(std::string_view var) const;  // throws EvaluationError when unbound
  void push(std::string_view var, int object) { slots_.emplace_back(var, object); }
  void pop() { slots_.pop_back(); }
  void set(std::size_t slot, int object) { slots_[slot].second = object; }
  std::size_t size() const { return slots_.size(); }

 private:
  std::vector<std::pair<std::string_view, int>> slots_;
};

std::vector<int> bind_args(const std::vector<std::string>& vars, const Binding& binding);

bool guard_holds(const Guard& guard, const Binding& binding, const EvaluationContext& ctx);

// Enumerates every tuple of objects for `bound` that passes `where`, pushing the
// bound variables onto `binding` for the duration of each callback.
template <class Fn>
void for_each_guarded_tuple(const std::vector<std::string>& bound, const Guard& where,
                            Binding& binding, const EvaluationContext& ctx, Fn&& fn);

double combine_values(CombinationFunction fn, std::span<const double> values);

double logistic(double s);

// Semantic value of `f` under `binding`.
double evaluate(const Formula& f, Binding& binding, const EvaluationContext& ctx);

// Like evaluate, but additionally requires the result to be a probability.
double evaluate_probability(const Formula& f, Binding& binding, const EvaluationContext& ctx);

// Textual form in the model language; parse(to_string(m)) reproduces m.
std::string to_string(const Formula& f);
std::string to_string(const Guard& g);
std::string to_string(const Model& m);
std::string format_number(double x);

// ---------------------------------------------------------------------------

template <class Fn>
void for_each_guarded_tuple(const std::vector<std::string>& bound, const Guard& where,
                            Binding& binding, const EvaluationContext& ctx, Fn&& fn) {
  const std::size_t k = bound.size();
  const int n = static_cast<int>(ctx.domain_size());
  if (k == 0) {
    if (guard_holds(where, binding, ctx)) fn();
    return;
  }
  if (n == 0) return;
  const std::size_t base = binding.size();
  for (const auto& v : bound) binding.push(v, 0);
  std::vector<int> tuple(k, 0);
  while (true) {
    if (guard_holds(where, binding, ctx)) fn();
    std::size_t i = k;
    bool done = true;
    while (i > 0) {
      --i;
      if (++tuple[i] < n) {
        binding.set(base + i, tuple[i]);
        done = false;
        break;
      }
      tuple[i] = 0;
      binding.set(base + i, 0);
    }
    if (done) break;
  }
  for (std::size_t j = 0; j < k; ++j) binding.pop();
}

}  // namespace rbn
