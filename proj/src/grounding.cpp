#include "rbn/grounding.hpp"

#include <algorithm>

#include "rbn/error.hpp"

namespace rbn {

DataContext::DataContext(const Model& model, const DataSet& data) : model_(&model), data_(&data) {}

const RelationDecl& DataContext::decl(const std::string& relation) const {
  const RelationDecl* r = model_->find_relation(relation);
  if (!r) throw EvaluationError("undeclared relation '" + relation + "'");
  return *r;
}

double DataContext::parameter_value(const std::string& name) const {
  auto it = parameters_.find(name);
  if (it == parameters_.end()) throw EvaluationError("no value for parameter '" + name + "'");
  return it->second;
}

void DataContext::set_numeric(const std::string& relation, std::span<const int> args,
                              double value) {
  numeric_[relation][DataSet::key(args)] = value;
}

double DataContext::atom_value(const std::string& relation, std::span<const int> args) const {
  const RelationDecl& r = decl(relation);
  switch (r.kind) {
    case RelationKind::BooleanInput: {
      if (!data_->find_relation(relation)) return 0.0;
      auto v = data_->input_value(relation, args);
      if (!v) throw EvaluationError("unknown value for input atom " + to_string(GroundAtom{relation, {args.begin(), args.end()}}, data_->labels()));
      return *v;
    }
    case RelationKind::NumericInput: {
      if (auto it = numeric_.find(relation); it != numeric_.end()) {
        if (auto jt = it->second.find(DataSet::key(args)); jt != it->second.end()) return jt->second;
      }
      std::optional<double> v;
      if (data_->find_relation(relation)) v = data_->input_value(relation, args);
      if (!v)
        throw EvaluationError("no value for numeric atom " +
                              to_string(GroundAtom{relation, {args.begin(), args.end()}},
                                        data_->labels()));
      return *v;
    }
    case RelationKind::Probabilistic:
      return probabilistic_value(r, args);
  }
  return 0.0;
}

double DataContext::probabilistic_value(const RelationDecl& r, std::span<const int> args) const {
  const Truth t = data_->find_relation(r.name) ? data_->observation(sample_, r.name, args)
                                               : Truth::Unknown;
  if (t == Truth::Unknown)
    throw EvaluationError("unobserved atom " +
                          to_string(GroundAtom{r.name, {args.begin(), args.end()}}, data_->labels()));
  return t == Truth::True ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------

void collect_probabilistic_references(const Formula& f, const Model& model, Binding& binding,
                                      const EvaluationContext& ctx,
                                      std::vector<GroundAtom>& out) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, AtomRef>) {
          const RelationDecl* r = model.find_relation(x.relation);
          if (r && r->kind == RelationKind::Probabilistic)
            out.push_back({x.relation, bind_args(x.args, binding)});
        } else if constexpr (std::is_same_v<T, Binary>) {
          collect_probabilistic_references(*x.lhs, model, binding, ctx, out);
          collect_probabilistic_references(*x.rhs, model, binding, ctx, out);
        } else if constexpr (std::is_same_v<T, Wif>) {
          collect_probabilistic_references(*x.cond, model, binding, ctx, out);
          collect_probabilistic_references(*x.then_branch, model, binding, ctx, out);
          collect_probabilistic_references(*x.else_branch, model, binding, ctx, out);
        } else if constexpr (std::is_same_v<T, Combine>) {
          for_each_guarded_tuple(x.bound, x.where, binding, ctx, [&] {
            for (const auto& b : x.bodies)
              collect_probabilistic_references(*b, model, binding, ctx, out);
          });
        }
      },
      f.node());
}

namespace {

std::uint64_t atom_key(std::uint32_t relation, std::span<const int> args) {
  // 4 x 16-bit argument lanes would fill the word; relations get the top bits
  // by hashing instead of packing.
  std::uint64_t k = DataSet::key(args);
  return k ^ (static_cast<std::uint64_t>(relation + 1) * 0x9E3779B97F4A7C15ULL);
}

}  // namespace

GroundModel::GroundModel(const Model& model, const DataSet& data) : model_(&model) {
  DataContext ctx(model, data);
  const int n = static_cast<int>(data.object_count());
  const auto& rels = model.relations();
  bool has_refs = false;
  for (const auto& a : model.assignments())
    for (const auto& name : referenced_relations(*a.formula))
      if (model.find_relation(name)->kind == RelationKind::Probabilistic) has_refs = true;

  for (std::uint32_t ri = 0; ri < rels.size(); ++ri) {
    if (rels[ri].kind != RelationKind::Probabilistic) continue;
    const Assignment* a = model.assignment_for(rels[ri].name);
    const int arity = rels[ri].arity;
    std::vector<int> t(static_cast<std::size_t>(arity), 0);
    while (true) {
      Binding b(a->vars, t);
      if (guard_holds(a->guard, b, ctx)) {
        const auto id = static_cast<std::uint32_t>(atoms_.size());
        atoms_.push_back({ri, t});
        // keys may collide after hashing the relation in; keep the first and
        // fall back to a linear check in find()
        index_.emplace(atom_key(ri, t), id);
      }
      int i = arity - 1;
      while (i >= 0 && ++t[i] == n) t[i--] = 0;
      if (i < 0) break;
    }
  }

  parents_.assign(atoms_.size(), {});
  if (!has_refs) return;
  std::vector<GroundAtom> refs;
  for (std::uint32_t id = 0; id < atoms_.size(); ++id) {
    const auto& atom = atoms_[id];
    const Assignment* a = model.assignment_for(rels[atom.relation].name);
    Binding b(a->vars, atom.args);
    refs.clear();
    collect_probabilistic_references(*a->formula, model, b, ctx, refs);
    for (const auto& g : refs) {
      const auto ri = static_cast<std::uint32_t>(model.find_relation(g.relation) - rels.data());
      if (auto p = find(ri, g.args)) parents_[id].push_back(*p);
    }
    std::sort(parents_[id].begin(), parents_[id].end());
    parents_[id].erase(std::unique(parents_[id].begin(), parents_[id].end()), parents_[id].end());
  }
}

std::optional<std::uint32_t> GroundModel::find(std::uint32_t relation,
                                               std::span<const int> args) const {
  auto it = index_.find(atom_key(relation, args));
  if (it != index_.end()) {
    const auto& a = atoms_[it->second];
    if (a.relation == relation && std::equal(a.args.begin(), a.args.end(), args.begin(), args.end()))
      return it->second;
  }
  return std::nullopt;
}

GroundAtom GroundModel::ground_atom(std::uint32_t atom) const {
  const auto& a = atoms_.at(atom);
  return {model_->relations()[a.relation].name, a.args};
}

std::vector<std::uint32_t> GroundModel::topological_order() const {
  const std::size_t n = atoms_.size();
  std::vector<std::uint8_t> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::uint32_t> order;
  order.reserve(n);
  std::vector<std::pair<std::uint32_t, std::size_t>> stack;
  for (std::uint32_t root = 0; root < n; ++root) {
    if (state[root]) continue;
    stack.emplace_back(root, 0);
    state[root] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next < parents_[v].size()) {
        const std::uint32_t p = parents_[v][next++];
        if (state[p] == 1) {
          const auto g = ground_atom(p);
          throw ModelError("cyclic ground dependency through " + to_string(g));
        }
        if (state[p] == 0) {
          state[p] = 1;
          stack.emplace_back(p, 0);
        }
      } else {
        state[v] = 2;
        order.push_back(v);
        stack.pop_back();
      }
    }
  }
  return order;
}

}  // namespace rbn
