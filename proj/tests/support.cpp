#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "rbn/error.hpp"

namespace rbn::testing {

std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(RBN_DATA_DIR) / name;
}

std::filesystem::path model_path(const std::string& name) {
  return std::filesystem::path(RBN_MODEL_DIR) / name;
}

namespace {

using AtomKey = std::tuple<std::size_t, std::string, std::vector<int>>;  // sample, relation, args

class OracleContext : public EvaluationContext {
 public:
  OracleContext(const Model& m, const DataSet& d) : m_(m), d_(d) {}

  std::size_t domain_size() const override { return d_.object_count(); }

  double parameter_value(const std::string& name) const override {
    auto it = params.find(name);
    if (it == params.end()) throw std::logic_error("oracle: no value for parameter " + name);
    return it->second;
  }

  double atom_value(const std::string& rel, std::span<const int> a) const override {
    const std::vector<int> args(a.begin(), a.end());
    const RelationDecl* r = m_.find_relation(rel);
    switch (r->kind) {
      case RelationKind::BooleanInput:
        return d_.find_relation(rel) ? *d_.input_value(rel, args) : 0.0;
      case RelationKind::NumericInput: {
        if (auto it = numeric.find({rel, args}); it != numeric.end()) return it->second;
        auto v = d_.input_value(rel, args);
        if (!v) throw std::logic_error("oracle: no numeric value for " + rel);
        return *v;
      }
      case RelationKind::Probabilistic: {
        const Truth t = d_.find_relation(rel) ? d_.observation(sample, rel, args) : Truth::Unknown;
        if (t != Truth::Unknown) return t == Truth::True ? 1.0 : 0.0;
        if (!in_scope(rel, args)) return 0.0;
        if (auto it = indicators.find({sample, rel, args}); it != indicators.end()) return it->second;
        throw std::logic_error("oracle: unknown atom " + rel + " has no indicator");
      }
    }
    return 0.0;
  }

  bool in_scope(const std::string& rel, const std::vector<int>& args) const {
    const Assignment* a = m_.assignment_for(rel);
    Binding b(a->vars, args);
    return guard_holds(a->guard, b, *this);
  }

  std::size_t sample = 0;
  std::map<std::string, double> params;
  std::map<std::pair<std::string, std::vector<int>>, double> numeric;
  std::map<AtomKey, double> indicators;

 private:
  const Model& m_;
  const DataSet& d_;
};

// Unknown probabilistic atoms a formula mentions under every guard expansion.
void references(const Formula& f, const Model& m, Binding& b, const OracleContext& ctx,
                std::size_t sample, std::set<AtomKey>& out) {
  if (const auto* a = f.as<AtomRef>()) {
    const RelationDecl* r = m.find_relation(a->relation);
    if (r->kind != RelationKind::Probabilistic) return;
    const auto args = bind_args(a->args, b);
    out.insert({sample, a->relation, args});
  } else if (const auto* x = f.as<Binary>()) {
    references(*x->lhs, m, b, ctx, sample, out);
    references(*x->rhs, m, b, ctx, sample, out);
  } else if (const auto* w = f.as<Wif>()) {
    references(*w->cond, m, b, ctx, sample, out);
    references(*w->then_branch, m, b, ctx, sample, out);
    references(*w->else_branch, m, b, ctx, sample, out);
  } else if (const auto* c = f.as<Combine>()) {
    for_each_guarded_tuple(c->bound, c->where, b, ctx, [&] {
      for (const auto& body : c->bodies) references(*body, m, b, ctx, sample, out);
    });
  }
}

double term(double p, bool t) {
  const double pc = std::clamp(p, 1e-12, 1.0 - 1e-12);
  return t ? std::log(pc) : std::log(1.0 - pc);
}

}  // namespace

double oracle_log_likelihood(const Model& model, const DataSet& data, const LikelihoodGraph& g,
                             std::span<const double> leaf_values, bool all_unknowns,
                             const std::map<std::string, double>& fixed_parameters) {
  OracleContext ctx(model, data);
  ctx.params = fixed_parameters;
  for (std::size_t i = 0; i < g.leaves().size(); ++i) {
    const Leaf& l = g.leaves()[i];
    switch (l.kind) {
      case LeafKind::Parameter: ctx.params[l.name] = leaf_values[i]; break;
      case LeafKind::NumericAtom: ctx.numeric[{l.name, l.args}] = leaf_values[i]; break;
      case LeafKind::Indicator: ctx.indicators[{l.sample, l.name, l.args}] = leaf_values[i] > 0.5 ? 1.0 : 0.0; break;
    }
  }
  // parameters never reached by the graph get a placeholder; they cannot affect the value
  for (const auto& p : model.parameters())
    if (!ctx.params.contains(p.name)) ctx.params[p.name] = p.range.clip(0.5);

  double ll = 0.0;
  const int n = static_cast<int>(data.object_count());
  for (std::size_t s = 0; s < data.sample_count(); ++s) {
    ctx.sample = s;
    std::vector<AtomKey> unknown_in_scope;
    std::set<AtomKey> relevant;
    for (const auto& r : model.relations()) {
      if (r.kind != RelationKind::Probabilistic) continue;
      const Assignment* a = model.assignment_for(r.name);
      std::vector<int> t(static_cast<std::size_t>(r.arity), 0);
      while (true) {
        if (ctx.in_scope(r.name, t)) {
          const Truth obs = data.find_relation(r.name) ? data.observation(s, r.name, t) : Truth::Unknown;
          Binding b(a->vars, t);
          if (obs != Truth::Unknown) {
            ll += term(evaluate_probability(*a->formula, b, ctx), obs == Truth::True);
            references(*a->formula, model, b, ctx, s, relevant);
          } else {
            unknown_in_scope.push_back({s, r.name, t});
          }
        }
        int i = r.arity - 1;
        while (i >= 0 && ++t[static_cast<std::size_t>(i)] == n) t[static_cast<std::size_t>(i--)] = 0;
        if (i < 0) break;
      }
    }
    // close the relevant set under references of relevant unknown atoms
    std::set<AtomKey> done;
    bool grew = true;
    while (grew) {
      grew = false;
      for (const auto& k : unknown_in_scope) {
        if (done.contains(k) || !(all_unknowns || relevant.contains(k))) continue;
        done.insert(k);
        grew = true;
        const auto& [sample, rel, args] = k;
        const Assignment* a = model.assignment_for(rel);
        Binding b(a->vars, args);
        references(*a->formula, model, b, ctx, sample, relevant);
        auto it = ctx.indicators.find(k);
        if (it == ctx.indicators.end()) throw std::logic_error("oracle: relevant unknown atom without indicator");
        ll += term(evaluate_probability(*a->formula, b, ctx), it->second > 0.5);
      }
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------

namespace {

struct Gen {
  std::mt19937_64& rng;
  const std::vector<std::string>* prob_allowed;
  int fresh = 0;

  int pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); }
  double unit(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  const std::string& var(const std::vector<std::string>& scope) {
    return scope[static_cast<std::size_t>(pick(static_cast<int>(scope.size())))];
  }

  Guard guard(const std::vector<std::string>& scope, const std::string& y) {
    Guard g;
    switch (pick(4)) {
      case 0: break;
      case 1: g.push_back({GuardAtom::Kind::Relation, false, "e", {var(scope), y}}); break;
      case 2:
        g.push_back({GuardAtom::Kind::Relation, pick(2) == 0, "b", {y}});
        g.push_back({GuardAtom::Kind::NotEqual, false, "", {var(scope), y}});
        break;
      default: g.push_back({GuardAtom::Kind::Relation, true, "e", {y, var(scope)}}); break;
    }
    return g;
  }

  FormulaPtr prob(int depth, std::vector<std::string> scope) {
    const int choice = depth <= 0 ? pick(4) : pick(10);
    switch (choice) {
      case 0: return make_constant(std::round(unit(0.05, 0.95) * 100) / 100);
      case 1: return make_param(pick(2) ? "p1" : "p2");
      case 2: {
        if (!prob_allowed->empty() && pick(3) != 0) {
          const auto& r = (*prob_allowed)[static_cast<std::size_t>(pick(static_cast<int>(prob_allowed->size())))];
          if (r == "r2") return make_atom(r, {var(scope), var(scope)});
          return make_atom(r, {var(scope)});
        }
        return make_atom("y", {var(scope), var(scope)});
      }
      case 3: return make_atom("y", {var(scope), var(scope)});
      case 4: return make_wif(prob(depth - 1, scope), prob(depth - 1, scope), prob(depth - 1, scope));
      case 5:
      case 6: {
        const std::string y = "V" + std::to_string(fresh++);
        auto g = guard(scope, y);
        auto inner = scope;
        inner.push_back(y);
        std::vector<FormulaPtr> bodies{real(depth - 1, inner)};
        if (pick(2)) bodies.push_back(real(depth - 1, inner));
        return make_combine(std::move(bodies), CombinationFunction::LogisticRegression, {y}, g);
      }
      case 7: {
        const std::string y = "V" + std::to_string(fresh++);
        auto inner = scope;
        inner.push_back(y);
        return make_combine({prob(depth - 1, inner)}, CombinationFunction::NoisyOr, {y}, guard(scope, y));
      }
      case 8: {
        const std::string y = "V" + std::to_string(fresh++);
        auto inner = scope;
        inner.push_back(y);
        // unguarded so the multiset is never empty
        return make_combine({prob(depth - 1, inner), prob(depth - 1, inner)}, CombinationFunction::Mean, {y});
      }
      default: return make_binary(BinaryOp::Times, prob(depth - 1, scope), prob(depth - 1, scope));
    }
  }

  FormulaPtr real(int depth, std::vector<std::string> scope) {
    const int choice = depth <= 0 ? pick(3) : pick(8);
    switch (choice) {
      case 0: return make_param(pick(2) ? "w1" : "w2");
      case 1: return make_atom("x", {var(scope)});
      case 2: return prob(0, scope);
      case 3: return make_binary(pick(2) ? BinaryOp::Plus : BinaryOp::Minus, real(depth - 1, scope), real(depth - 1, scope));
      case 4: return make_binary(BinaryOp::Times, real(depth - 1, scope), real(depth - 1, scope));
      case 5: {
        const std::string y = "V" + std::to_string(fresh++);
        auto g = guard(scope, y);
        auto inner = scope;
        inner.push_back(y);
        return make_combine({real(depth - 1, inner)}, CombinationFunction::Sum, {y}, g);
      }
      case 6: return make_wif(prob(depth - 1, scope), real(depth - 1, scope), real(depth - 1, scope));
      default: return prob(depth - 1, scope);
    }
  }
};

std::vector<RelationDecl> random_relations(std::mt19937_64& rng) {
  const bool x_bounded = std::bernoulli_distribution(0.5)(rng);
  return {
      {"e", 2, RelationKind::BooleanInput, {}, false},
      {"b", 1, RelationKind::BooleanInput, {}, false},
      {"x", 1, RelationKind::NumericInput, x_bounded ? Interval{0.0, kInfinity} : Interval{}, true},
      {"y", 2, RelationKind::NumericInput, {0.0, 1.0}, false},
      {"r0", 1, RelationKind::Probabilistic, {}, false},
      {"r1", 1, RelationKind::Probabilistic, {}, false},
      {"r2", 2, RelationKind::Probabilistic, {}, false},
  };
}

std::vector<ParameterDecl> random_parameters() {
  return {{"p1", {0.0, 1.0}}, {"p2", {0.0, 1.0}}, {"w1", {}}, {"w2", {}}};
}

}  // namespace

FormulaPtr random_formula(std::mt19937_64& rng, const Model& scope, int depth) {
  (void)scope;
  static const std::vector<std::string> allowed{"r0", "r1", "r2"};
  Gen gen{rng, &allowed};
  return std::uniform_int_distribution<int>(0, 1)(rng) ? gen.prob(depth, {"X"}) : gen.real(depth, {"X"});
}

Instance random_instance(std::mt19937_64& rng) {
  static const std::vector<std::string> none{}, first{"r0"}, both{"r0", "r1"};
  Gen g0{rng, &none}, g1{rng, &first}, g2{rng, &both};
  std::vector<Assignment> as;
  as.push_back({"r0", {"X"}, {}, g0.prob(3, {"X"})});
  as.push_back({"r1", {"X"}, {}, g1.prob(3, {"X"})});
  Guard head;
  if (std::bernoulli_distribution(0.5)(rng)) head.push_back({GuardAtom::Kind::NotEqual, false, "", {"X", "Y"}});
  as.push_back({"r2", {"X", "Y"}, head, g2.prob(3, {"X", "Y"})});
  Model m = Model::create(random_relations(rng), random_parameters(), std::move(as));

  const int n = std::uniform_int_distribution<int>(3, 5)(rng);
  std::vector<std::string> objects;
  for (int i = 0; i < n; ++i) objects.push_back("o" + std::to_string(i));
  std::vector<RelationSchema> schemas{
      {"e", 2, RelationKind::BooleanInput, {}, true, true},
      {"b", 1, RelationKind::BooleanInput, {}, true, true},
      {"x", 1, RelationKind::NumericInput, {}, true, true},
      {"y", 2, RelationKind::NumericInput, {0.0, 1.0}, true, true},
      {"r0", 1, RelationKind::Probabilistic, {}, true, false},
      {"r1", 1, RelationKind::Probabilistic, {}, true, false},
      {"r2", 2, RelationKind::Probabilistic, {}, true, false},
  };
  DataSet d(objects, schemas);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    d.set_input("b", std::vector<int>{i}, coin(rng) ? 1.0 : 0.0);
    d.set_input("x", std::vector<int>{i}, unit(rng));
    for (int j = 0; j < n; ++j) {
      d.set_input("e", std::vector<int>{i, j}, coin(rng) ? 1.0 : 0.0);
      d.set_input("y", std::vector<int>{i, j}, unit(rng));
    }
  }
  const int samples = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int s = 1; s < samples; ++s) d.add_sample();
  auto observe = [&](std::size_t s, const std::string& rel, std::vector<int> args) {
    const double u = unit(rng);
    if (u < 0.2) return;  // unknown
    d.set_observation(s, rel, args, u < 0.6 ? Truth::True : Truth::False);
  };
  for (std::size_t s = 0; s < d.sample_count(); ++s)
    for (int i = 0; i < n; ++i) {
      observe(s, "r0", {i});
      observe(s, "r1", {i});
      for (int j = 0; j < n; ++j) observe(s, "r2", {i, j});
    }
  return {std::move(m), std::move(d)};
}

std::vector<double> interior_values(const LikelihoodGraph& g, std::mt19937_64& rng) {
  std::vector<double> v;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const Leaf& l : g.leaves()) {
    const double u = unit(rng);
    switch (l.kind) {
      case LeafKind::Indicator: v.push_back(u < 0.5 ? 0.0 : 1.0); break;
      case LeafKind::Parameter:
      case LeafKind::NumericAtom:
        if (l.range.bounded())
          v.push_back(l.range.lo + (0.2 + 0.6 * u) * (l.range.hi - l.range.lo));
        else if (l.range.lo > -kInfinity)
          v.push_back(l.range.lo + 0.1 + 0.9 * u);
        else
          v.push_back(2.0 * u - 1.0);
        break;
    }
  }
  return v;
}

bool unsaturated(Evaluator& ev, double margin) {
  for (std::size_t t = 0; t < ev.graph().tops().size(); ++t) {
    const double p = ev.probability(t);
    if (p < margin || p > 1.0 - margin) return false;
  }
  return true;
}

double finite_difference(Evaluator& ev, std::size_t leaf, double h) {
  const double x = ev.leaf_value(leaf);
  ev.set_leaf_value(leaf, x + h);
  const double up = ev.log_likelihood();
  ev.set_leaf_value(leaf, x - h);
  const double down = ev.log_likelihood();
  ev.set_leaf_value(leaf, x);
  return (up - down) / (2.0 * h);
}

DataSet small_network(int nodes, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::string> objects;
  for (int i = 1; i <= nodes; ++i) objects.push_back(std::to_string(i));
  DataSet d(objects, {{"link", 2, RelationKind::Probabilistic, {}, false, true}});
  for (auto [a, b] : edges) d.set_observation(0, "link", std::vector<int>{a, b}, Truth::True);
  return d;
}

}  // namespace rbn::testing
