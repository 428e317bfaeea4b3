#include "rbn/formula.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "rbn/error.hpp"

namespace rbn {

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::BooleanInput: return "boolean-input";
    case RelationKind::NumericInput: return "numeric-input";
    case RelationKind::Probabilistic: return "probabilistic";
  }
  return "?";
}

std::string_view to_string(CombinationFunction fn) {
  switch (fn) {
    case CombinationFunction::Sum: return "sum";
    case CombinationFunction::LogisticRegression: return "l-reg";
    case CombinationFunction::Mean: return "mean";
    case CombinationFunction::NoisyOr: return "noisy-or";
  }
  return "?";
}

std::optional<CombinationFunction> combination_function_from_name(std::string_view name) {
  if (name == "sum") return CombinationFunction::Sum;
  if (name == "l-reg") return CombinationFunction::LogisticRegression;
  if (name == "mean") return CombinationFunction::Mean;
  if (name == "noisy-or") return CombinationFunction::NoisyOr;
  return std::nullopt;
}

FormulaPtr make_constant(double value) { return std::make_shared<const Formula>(Constant{value}); }

FormulaPtr make_param(std::string name) {
  return std::make_shared<const Formula>(ParamRef{std::move(name)});
}

FormulaPtr make_atom(std::string relation, std::vector<std::string> args) {
  return std::make_shared<const Formula>(AtomRef{std::move(relation), std::move(args)});
}

FormulaPtr make_binary(BinaryOp op, FormulaPtr lhs, FormulaPtr rhs) {
  return std::make_shared<const Formula>(Binary{op, std::move(lhs), std::move(rhs)});
}

FormulaPtr make_wif(FormulaPtr cond, FormulaPtr then_branch, FormulaPtr else_branch) {
  return std::make_shared<const Formula>(
      Wif{std::move(cond), std::move(then_branch), std::move(else_branch)});
}

FormulaPtr make_combine(std::vector<FormulaPtr> bodies, CombinationFunction fn,
                        std::vector<std::string> bound, Guard where) {
  return std::make_shared<const Formula>(
      Combine{std::move(bodies), fn, std::move(bound), std::move(where)});
}

bool structurally_equal(const Formula& a, const Formula& b) {
  if (a.node().index() != b.node().index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const T& y = *b.as<T>();
        if constexpr (std::is_same_v<T, Constant>) {
          return x.value == y.value;
        } else if constexpr (std::is_same_v<T, ParamRef>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, AtomRef>) {
          return x.relation == y.relation && x.args == y.args;
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && structurally_equal(*x.lhs, *y.lhs) &&
                 structurally_equal(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, Wif>) {
          return structurally_equal(*x.cond, *y.cond) &&
                 structurally_equal(*x.then_branch, *y.then_branch) &&
                 structurally_equal(*x.else_branch, *y.else_branch);
        } else {
          if (x.fn != y.fn || x.bound != y.bound || x.where != y.where ||
              x.bodies.size() != y.bodies.size())
            return false;
          for (std::size_t i = 0; i < x.bodies.size(); ++i)
            if (!structurally_equal(*x.bodies[i], *y.bodies[i])) return false;
          return true;
        }
      },
      a.node());
}

std::set<std::string> guard_variables(const Guard& g) {
  std::set<std::string> out;
  for (const auto& atom : g) out.insert(atom.vars.begin(), atom.vars.end());
  return out;
}

std::set<std::string> free_variables(const Formula& f) {
  return std::visit(
      [](const auto& x) -> std::set<std::string> {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Constant> || std::is_same_v<T, ParamRef>) {
          return {};
        } else if constexpr (std::is_same_v<T, AtomRef>) {
          return {x.args.begin(), x.args.end()};
        } else if constexpr (std::is_same_v<T, Binary>) {
          auto out = free_variables(*x.lhs);
          out.merge(free_variables(*x.rhs));
          return out;
        } else if constexpr (std::is_same_v<T, Wif>) {
          auto out = free_variables(*x.cond);
          out.merge(free_variables(*x.then_branch));
          out.merge(free_variables(*x.else_branch));
          return out;
        } else {
          std::set<std::string> out = guard_variables(x.where);
          for (const auto& body : x.bodies) out.merge(free_variables(*body));
          for (const auto& v : x.bound) out.erase(v);
          return out;
        }
      },
      f.node());
}

namespace {

void collect_relations(const Formula& f, std::set<std::string>& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, AtomRef>) {
          out.insert(x.relation);
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_relations(*x.lhs, out);
          collect_relations(*x.rhs, out);
        } else if constexpr (std::is_same_v<T, Wif>) {
          collect_relations(*x.cond, out);
          collect_relations(*x.then_branch, out);
          collect_relations(*x.else_branch, out);
        } else if constexpr (std::is_same_v<T, Combine>) {
          for (const auto& b : x.bodies) collect_relations(*b, out);
        }
      },
      f.node());
}

}  // namespace

std::set<std::string> referenced_relations(const Formula& f) {
  std::set<std::string> out;
  collect_relations(f, out);
  return out;
}

// ---------------------------------------------------------------------------
// Model validation

namespace {

class ModelValidator {
 public:
  explicit ModelValidator(const Model& m) : model_(m) {}

  void check_guard(const Guard& guard, const std::set<std::string>& scope) const {
    for (const auto& g : guard) {
      for (const auto& v : g.vars)
        if (!scope.count(v)) throw ModelError("guard variable '" + v + "' is not bound");
      if (g.kind != GuardAtom::Kind::Relation) {
        if (g.vars.size() != 2) throw ModelError("(in)equality guard needs two variables");
        continue;
      }
      const RelationDecl* r = model_.find_relation(g.relation);
      if (!r) throw ModelError("undeclared relation '" + g.relation + "' in guard");
      if (r->kind != RelationKind::BooleanInput)
        throw ModelError("guard relation '" + g.relation + "' must be a Boolean input relation");
      if (static_cast<int>(g.vars.size()) != r->arity)
        throw ModelError("arity mismatch for '" + g.relation + "' in guard: expected " +
                         std::to_string(r->arity) + ", got " + std::to_string(g.vars.size()));
    }
  }

  void check(const Formula& f, std::set<std::string>& scope) const {
    std::visit(
        [&](const auto& x) {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, Constant>) {
            if (!std::isfinite(x.value)) throw ModelError("non-finite constant");
          } else if constexpr (std::is_same_v<T, ParamRef>) {
            if (!model_.find_parameter(x.name))
              throw ModelError("undeclared parameter '" + x.name + "'");
          } else if constexpr (std::is_same_v<T, AtomRef>) {
            const RelationDecl* r = model_.find_relation(x.relation);
            if (!r) throw ModelError("undeclared relation '" + x.relation + "'");
            if (static_cast<int>(x.args.size()) != r->arity)
              throw ModelError("arity mismatch for '" + x.relation + "': expected " +
                               std::to_string(r->arity) + ", got " +
                               std::to_string(x.args.size()));
            for (const auto& v : x.args)
              if (!scope.count(v))
                throw ModelError("variable '" + v + "' in " + x.relation + " is not bound");
          } else if constexpr (std::is_same_v<T, Binary>) {
            check(*x.lhs, scope);
            check(*x.rhs, scope);
          } else if constexpr (std::is_same_v<T, Wif>) {
            check(*x.cond, scope);
            check(*x.then_branch, scope);
            check(*x.else_branch, scope);
          } else {
            if (x.bodies.empty()) throw ModelError("COMBINE without body formulas");
            std::set<std::string> seen;
            for (const auto& v : x.bound) {
              if (scope.count(v))
                throw ModelError("bound variable '" + v + "' collides with an enclosing variable");
              if (!seen.insert(v).second)
                throw ModelError("variable '" + v + "' bound twice in one COMBINE");
            }
            scope.insert(x.bound.begin(), x.bound.end());
            check_guard(x.where, scope);
            for (const auto& b : x.bodies) check(*b, scope);
            for (const auto& v : x.bound) scope.erase(v);
          }
        },
        f.node());
  }

 private:
  const Model& model_;
};

}  // namespace

Model Model::create(std::vector<RelationDecl> relations, std::vector<ParameterDecl> parameters,
                    std::vector<Assignment> assignments) {
  Model m;
  m.relations_ = std::move(relations);
  m.parameters_ = std::move(parameters);
  m.assignments_ = std::move(assignments);

  std::set<std::string> names;
  for (const auto& r : m.relations_) {
    if (r.arity < 0) throw ModelError("negative arity for '" + r.name + "'");
    if (!names.insert(r.name).second) throw ModelError("duplicate declaration of '" + r.name + "'");
    if (r.range.lo > r.range.hi) throw ModelError("empty range for '" + r.name + "'");
    if (r.kind != RelationKind::NumericInput && (r.learnable || r.range != Interval{}))
      throw ModelError("range/learnable only apply to numeric input relations ('" + r.name + "')");
  }
  for (const auto& p : m.parameters_) {
    if (!names.insert(p.name).second) throw ModelError("duplicate declaration of '" + p.name + "'");
    if (p.range.lo > p.range.hi) throw ModelError("empty range for parameter '" + p.name + "'");
  }

  ModelValidator validator(m);
  std::set<std::string> assigned;
  for (const auto& a : m.assignments_) {
    const RelationDecl* r = m.find_relation(a.relation);
    if (!r) throw ModelError("assignment to undeclared relation '" + a.relation + "'");
    if (r->kind != RelationKind::Probabilistic)
      throw ModelError("assignment to non-probabilistic relation '" + a.relation + "'");
    if (!assigned.insert(a.relation).second)
      throw ModelError("duplicate assignment for '" + a.relation + "'");
    if (static_cast<int>(a.vars.size()) != r->arity)
      throw ModelError("arity mismatch in head of '" + a.relation + "'");
    std::set<std::string> scope;
    for (const auto& v : a.vars)
      if (!scope.insert(v).second)
        throw ModelError("repeated head variable '" + v + "' in '" + a.relation + "'");
    if (!a.formula) throw ModelError("missing formula for '" + a.relation + "'");
    validator.check_guard(a.guard, scope);
    validator.check(*a.formula, scope);
  }
  for (const auto& r : m.relations_)
    if (r.kind == RelationKind::Probabilistic && !assigned.count(r.name))
      throw ModelError("probabilistic relation '" + r.name + "' has no formula");
  return m;
}

const RelationDecl* Model::find_relation(std::string_view name) const {
  for (const auto& r : relations_)
    if (r.name == name) return &r;
  return nullptr;
}

const ParameterDecl* Model::find_parameter(std::string_view name) const {
  for (const auto& p : parameters_)
    if (p.name == name) return &p;
  return nullptr;
}

const Assignment* Model::assignment_for(std::string_view relation) const {
  for (const auto& a : assignments_)
    if (a.relation == relation) return &a;
  return nullptr;
}

bool structurally_equal(const Model& a, const Model& b) {
  if (a.relations() != b.relations() || a.parameters() != b.parameters() ||
      a.assignments().size() != b.assignments().size())
    return false;
  for (std::size_t i = 0; i < a.assignments().size(); ++i) {
    const auto& x = a.assignments()[i];
    const auto& y = b.assignments()[i];
    if (x.relation != y.relation || x.vars != y.vars || x.guard != y.guard ||
        !structurally_equal(*x.formula, *y.formula))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Evaluation

Binding::Binding(const std::vector<std::string>& vars, std::span<const int> objects) {
  if (vars.size() != objects.size()) throw EvaluationError("binding arity mismatch");
  for (std::size_t i = 0; i < vars.size(); ++i) push(vars[i], objects[i]);
}

std::optional<int> Binding::lookup(std::string_view var) const {
  for (auto it = slots_.rbegin(); it != slots_.rend(); ++it)
    if (it->first == var) return it->second;
  return std::nullopt;
}

int Binding::at(std::string_view var) const {
  if (auto v = lookup(var)) return *v;
  throw EvaluationError("unbound variable '" + std::string(var) + "'");
}

std::vector<int> bind_args(const std::vector<std::string>& vars, const Binding& binding) {
  std::vector<int> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(binding.at(v));
  return out;
}

bool guard_holds(const Guard& guard, const Binding& binding, const EvaluationContext& ctx) {
  int args[8];
  for (const auto& g : guard) {
    bool value;
    if (g.kind == GuardAtom::Kind::Relation) {
      if (g.vars.size() > 8) throw EvaluationError("guard atom arity above 8");
      for (std::size_t i = 0; i < g.vars.size(); ++i) args[i] = binding.at(g.vars[i]);
      value = ctx.atom_value(g.relation, std::span<const int>(args, g.vars.size())) != 0.0;
    } else {
      const bool same = binding.at(g.vars[0]) == binding.at(g.vars[1]);
      value = g.kind == GuardAtom::Kind::Equal ? same : !same;
    }
    if (g.negated) value = !value;
    if (!value) return false;
  }
  return true;
}

double logistic(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double combine_values(CombinationFunction fn, std::span<const double> values) {
  switch (fn) {
    case CombinationFunction::Sum: {
      double s = 0;
      for (double v : values) s += v;
      return s;
    }
    case CombinationFunction::LogisticRegression: {
      double s = 0;
      for (double v : values) s += v;
      return logistic(s);
    }
    case CombinationFunction::Mean: {
      if (values.empty()) throw EvaluationError("mean of an empty multiset");
      double s = 0;
      for (double v : values) s += v;
      return s / static_cast<double>(values.size());
    }
    case CombinationFunction::NoisyOr: {
      double q = 1.0;
      for (double v : values) {
        if (!(v >= 0.0 && v <= 1.0))
          throw EvaluationError("noisy-or input " + format_number(v) + " outside [0,1]");
        q *= 1.0 - v;
      }
      return 1.0 - q;
    }
  }
  return 0.0;
}

double evaluate(const Formula& f, Binding& binding, const EvaluationContext& ctx) {
  return std::visit(
      [&](const auto& x) -> double {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return x.value;
        } else if constexpr (std::is_same_v<T, ParamRef>) {
          return ctx.parameter_value(x.name);
        } else if constexpr (std::is_same_v<T, AtomRef>) {
          const auto args = bind_args(x.args, binding);
          return ctx.atom_value(x.relation, args);
        } else if constexpr (std::is_same_v<T, Binary>) {
          const double a = evaluate(*x.lhs, binding, ctx);
          const double b = evaluate(*x.rhs, binding, ctx);
          switch (x.op) {
            case BinaryOp::Plus: return a + b;
            case BinaryOp::Minus: return a - b;
            case BinaryOp::Times: return a * b;
          }
          return 0.0;
        } else if constexpr (std::is_same_v<T, Wif>) {
          const double c = evaluate(*x.cond, binding, ctx);
          // skip the unused branch when the guard is Boolean
          if (c == 1.0) return evaluate(*x.then_branch, binding, ctx);
          if (c == 0.0) return evaluate(*x.else_branch, binding, ctx);
          return c * evaluate(*x.then_branch, binding, ctx) +
                 (1.0 - c) * evaluate(*x.else_branch, binding, ctx);
        } else {
          std::vector<double> values;
          for_each_guarded_tuple(x.bound, x.where, binding, ctx, [&] {
            for (const auto& body : x.bodies) values.push_back(evaluate(*body, binding, ctx));
          });
          return combine_values(x.fn, values);
        }
      },
      f.node());
}

double evaluate_probability(const Formula& f, Binding& binding, const EvaluationContext& ctx) {
  const double p = evaluate(f, binding, ctx);
  if (!(p >= 0.0 && p <= 1.0))
    throw EvaluationError("probability formula evaluated to " + format_number(p));
  return p;
}

// ---------------------------------------------------------------------------
// Printing

std::string format_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

std::string join_vars(const std::vector<std::string>& vars) {
  std::string out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (i) out += ", ";
    out += vars[i];
  }
  return out;
}

bool is_compound(const Formula& f) { return f.as<Wif>() || f.as<Combine>(); }

void print(const Formula& f, std::ostringstream& os);

void print_operand(const Formula& f, bool parens, std::ostringstream& os) {
  if (parens) os << '(';
  print(f, os);
  if (parens) os << ')';
}

void print(const Formula& f, std::ostringstream& os) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Constant>) {
          os << format_number(x.value);
        } else if constexpr (std::is_same_v<T, ParamRef>) {
          os << x.name;
        } else if constexpr (std::is_same_v<T, AtomRef>) {
          os << x.relation;
          if (!x.args.empty()) os << '(' << join_vars(x.args) << ')';
        } else if constexpr (std::is_same_v<T, Binary>) {
          const auto* lb = x.lhs->template as<Binary>();
          const auto* rb = x.rhs->template as<Binary>();
          bool lparen = is_compound(*x.lhs);
          bool rparen = is_compound(*x.rhs);
          if (x.op == BinaryOp::Times) {
            lparen = lparen || (lb && lb->op != BinaryOp::Times);
            rparen = rparen || rb;
          } else {
            rparen = rparen || (rb && rb->op != BinaryOp::Times);
          }
          print_operand(*x.lhs, lparen, os);
          os << (x.op == BinaryOp::Plus ? " + " : x.op == BinaryOp::Minus ? " - " : " * ");
          print_operand(*x.rhs, rparen, os);
        } else if constexpr (std::is_same_v<T, Wif>) {
          os << "WIF ";
          print(*x.cond, os);
          os << " THEN ";
          print(*x.then_branch, os);
          os << " ELSE ";
          print(*x.else_branch, os);
        } else {
          os << "COMBINE ";
          for (std::size_t i = 0; i < x.bodies.size(); ++i) {
            if (i) os << ", ";
            const bool last = i + 1 == x.bodies.size();
            print_operand(*x.bodies[i], !last && is_compound(*x.bodies[i]), os);
          }
          os << " WITH " << to_string(x.fn);
          if (!x.bound.empty() || !x.where.empty()) {
            os << " FORALL " << join_vars(x.bound);
            if (!x.where.empty()) os << " WHERE " << to_string(x.where);
          }
        }
      },
      f.node());
}

std::string format_interval(const Interval& r) {
  return "[" + format_number(r.lo) + ", " + format_number(r.hi) + "]";
}

}  // namespace

std::string to_string(const Formula& f) {
  std::ostringstream os;
  print(f, os);
  return os.str();
}

std::string to_string(const Guard& g) {
  std::string out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (i) out += " & ";
    const auto& a = g[i];
    switch (a.kind) {
      case GuardAtom::Kind::Relation:
        if (a.negated) out += "!";
        out += a.relation;
        if (!a.vars.empty()) out += "(" + join_vars(a.vars) + ")";
        break;
      case GuardAtom::Kind::Equal:
      case GuardAtom::Kind::NotEqual: {
        const bool eq = (a.kind == GuardAtom::Kind::Equal) != a.negated;
        out += a.vars[0] + (eq ? " = " : " != ") + a.vars[1];
        break;
      }
    }
  }
  return out;
}

std::string to_string(const Model& m) {
  std::ostringstream os;
  for (const auto& r : m.relations()) {
    if (r.kind == RelationKind::Probabilistic) {
      os << "prob " << r.name << "/" << r.arity << ";\n";
    } else {
      os << "input " << r.name << "/" << r.arity;
      if (r.kind == RelationKind::NumericInput) {
        os << " numeric";
        if (r.range != Interval{}) os << ' ' << format_interval(r.range);
        if (r.learnable) os << " learnable";
      }
      os << ";\n";
    }
  }
  for (const auto& p : m.parameters()) {
    os << "param " << p.name;
    if (p.range != Interval{}) os << ' ' << format_interval(p.range);
    os << ";\n";
  }
  for (const auto& a : m.assignments()) {
    os << a.relation;
    if (!a.vars.empty()) os << "(" << join_vars(a.vars) << ")";
    if (!a.guard.empty()) os << " WHERE " << to_string(a.guard);
    os << " <- " << to_string(*a.formula) << ";\n";
  }
  return os.str();
}

}  // namespace rbn
