#include "rbn/likelihood_graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <sstream>

#include "rbn/error.hpp"
#include "rbn/grounding.hpp"

namespace rbn {

double term_log(double p, bool t) {
  const double pc = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return t ? std::log(pc) : std::log1p(-pc);
}

double term_log_derivative(double p, bool t) {
  if (!(p > kProbabilityClamp && p < 1.0 - kProbabilityClamp)) return 0.0;
  return t ? 1.0 / p : -1.0 / (1.0 - p);
}

namespace {

std::string leaf_key(LeafKind kind, std::string_view name, std::span<const int> args,
                     std::size_t sample) {
  std::string k;
  k += kind == LeafKind::Parameter ? 'p' : (kind == LeafKind::NumericAtom ? 'n' : 'i');
  if (kind == LeafKind::Indicator) {
    k += std::to_string(sample);
    k += ':';
  }
  k += name;
  for (int a : args) {
    k += ',';
    k += std::to_string(a);
  }
  return k;
}

void append_bits(std::string& s, const void* p, std::size_t n) {
  s.append(static_cast<const char*>(p), n);
}

}  // namespace

class GraphBuilder {
 public:
  GraphBuilder(const Model& model, const DataSet& data, const BuildOptions& options,
               LikelihoodGraph& g)
      : model_(model), data_(data), opt_(options), g_(g), ctx_(model, data), ground_(model, data) {}

  void run();

 private:
  struct Operand {
    std::int32_t node = -1;
    double value = 0.0;
    bool constant() const { return node < 0; }
  };

  Operand ground(const Formula& f, Binding& b);
  Operand ground_atom(const AtomRef& a, Binding& b);
  Operand ground_combine(const Combine& c, Binding& b);
  void touch(const Formula& f, Binding& b);

  Operand constant(double v);
  Operand linear(double c0, std::vector<std::pair<Operand, double>> terms);
  Operand product(std::vector<Operand> factors);
  Operand wif(Operand c, Operand a, Operand b);
  Operand logistic_of(Operand x);
  Operand noisy_or(std::vector<Operand> xs);

  std::uint32_t intern(NodeOp op, std::uint8_t mask, double k0, double k1, double k2,
                       std::vector<std::uint32_t> children, std::vector<double> weights);
  std::uint32_t add_node(NodeOp op, std::uint8_t mask, double k0, double k1, double k2,
                         const std::vector<std::uint32_t>& children,
                         const std::vector<double>& weights);
  std::uint32_t leaf(LeafKind kind, const std::string& name, std::span<const int> args,
                     std::size_t sample, Interval range, double initial);
  Operand indicator(std::uint32_t atom);
  void add_term(std::uint32_t atom, Operand p, Truth observed, std::int32_t indicator_leaf);

  const Model& model_;
  const DataSet& data_;
  const BuildOptions& opt_;
  LikelihoodGraph& g_;
  DataContext ctx_;
  GroundModel ground_;
  std::unordered_map<std::string, std::uint32_t> interned_;

  // per sample
  std::size_t sample_ = 0;
  std::vector<Truth> truth_;
  std::vector<std::int32_t> indicator_of_;
  std::deque<std::uint32_t> pending_;
};

void GraphBuilder::run() {
  g_.model_ = &model_;
  for (const auto& p : ground_.parents())
    if (!p.empty()) {
      ground_.topological_order();
      break;
    }
  const auto& atoms = ground_.atoms();
  const auto& rels = model_.relations();
  for (std::size_t s = 0; s < data_.sample_count(); ++s) {
    sample_ = s;
    ctx_.set_sample(s);
    truth_.assign(atoms.size(), Truth::Unknown);
    indicator_of_.assign(atoms.size(), -1);
    for (std::uint32_t id = 0; id < atoms.size(); ++id) {
      const auto& name = rels[atoms[id].relation].name;
      if (data_.find_relation(name)) truth_[id] = data_.observation(s, name, atoms[id].args);
    }
    for (std::uint32_t id = 0; id < atoms.size(); ++id) {
      if (truth_[id] != Truth::Unknown) {
        const Assignment* a = model_.assignment_for(rels[atoms[id].relation].name);
        Binding b(a->vars, atoms[id].args);
        add_term(id, ground(*a->formula, b), truth_[id], -1);
      } else if (opt_.keep_irrelevant_unknowns) {
        indicator(id);
      }
    }
    while (!pending_.empty()) {
      const std::uint32_t id = pending_.front();
      pending_.pop_front();
      const Assignment* a = model_.assignment_for(rels[atoms[id].relation].name);
      Binding b(a->vars, atoms[id].args);
      add_term(id, ground(*a->formula, b), Truth::Unknown, indicator_of_[id]);
    }
  }

  // leaf lookup and parent lists
  const std::size_t n = g_.op_.size();
  g_.leaf_of_node_.assign(n, -1);
  for (std::size_t i = 0; i < g_.leaves_.size(); ++i)
    g_.leaf_of_node_[g_.leaves_[i].node] = static_cast<std::int32_t>(i);
  std::vector<std::uint32_t> count(n + 1, 0);
  for (std::uint32_t c : g_.children_) ++count[c + 1];
  for (std::size_t i = 0; i < n; ++i) count[i + 1] += count[i];
  g_.parent_begin_ = count;
  g_.parents_.assign(g_.children_.size(), 0);
  for (std::uint32_t v = 0; v < n; ++v)
    for (std::uint32_t c : g_.children(v)) g_.parents_[count[c]++] = v;
}

void GraphBuilder::add_term(std::uint32_t atom, Operand p, Truth observed,
                            std::int32_t indicator_leaf) {
  if (p.constant() && !(p.value >= 0.0 && p.value <= 1.0))
    throw EvaluationError("probability of " + to_string(ground_.ground_atom(atom), data_.labels()) +
                          " evaluated to " + format_number(p.value));
  if (p.constant() && observed != Truth::Unknown) {
    g_.constant_ll_ += term_log(p.value, observed == Truth::True);
    ++g_.folded_terms_;
    return;
  }
  Top t;
  t.prob_node = p.node;
  t.prob_constant = p.value;
  t.sample = static_cast<std::uint32_t>(sample_);
  t.relation = ground_.atoms()[atom].relation;
  t.args = ground_.atoms()[atom].args;
  t.observed = observed == Truth::Unknown ? -1 : (observed == Truth::True ? 1 : 0);
  t.indicator = indicator_leaf;
  g_.tops_.push_back(std::move(t));
}

GraphBuilder::Operand GraphBuilder::indicator(std::uint32_t atom) {
  if (indicator_of_[atom] < 0) {
    const auto& a = ground_.atoms()[atom];
    leaf(LeafKind::Indicator, model_.relations()[a.relation].name, a.args, sample_, {0.0, 1.0}, 0.0);
    indicator_of_[atom] = static_cast<std::int32_t>(g_.leaves_.size() - 1);
    pending_.push_back(atom);
  }
  return {static_cast<std::int32_t>(g_.leaves_[static_cast<std::size_t>(indicator_of_[atom])].node), 0.0};
}

std::uint32_t GraphBuilder::leaf(LeafKind kind, const std::string& name, std::span<const int> args,
                                 std::size_t sample, Interval range, double initial) {
  auto key = leaf_key(kind, name, args, sample);
  if (auto it = g_.leaf_index_.find(key); it != g_.leaf_index_.end())
    return g_.leaves_[it->second].node;
  const std::uint32_t node = add_node(NodeOp::Leaf, 0, 0, 0, 0, {}, {});
  Leaf l;
  l.kind = kind;
  l.name = name;
  l.args.assign(args.begin(), args.end());
  l.sample = sample;
  l.range = range;
  l.initial = initial;
  l.node = node;
  g_.leaf_index_.emplace(std::move(key), g_.leaves_.size());
  g_.leaves_.push_back(std::move(l));
  return node;
}

GraphBuilder::Operand GraphBuilder::ground(const Formula& f, Binding& b) {
  return std::visit(
      [&](const auto& x) -> Operand {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return constant(x.value);
        } else if constexpr (std::is_same_v<T, ParamRef>) {
          if (auto it = opt_.fixed_parameters.find(x.name); it != opt_.fixed_parameters.end())
            return constant(it->second);
          const ParameterDecl* p = model_.find_parameter(x.name);
          return {static_cast<std::int32_t>(
                      leaf(LeafKind::Parameter, x.name, {}, 0, p->range, p->range.clip(0.0))),
                  0.0};
        } else if constexpr (std::is_same_v<T, AtomRef>) {
          return ground_atom(x, b);
        } else if constexpr (std::is_same_v<T, Binary>) {
          const Operand l = ground(*x.lhs, b);
          const Operand r = ground(*x.rhs, b);
          switch (x.op) {
            case BinaryOp::Plus: return linear(0.0, {{l, 1.0}, {r, 1.0}});
            case BinaryOp::Minus: return linear(0.0, {{l, 1.0}, {r, -1.0}});
            case BinaryOp::Times: return product({l, r});
          }
          return {};
        } else if constexpr (std::is_same_v<T, Wif>) {
          const Operand c = ground(*x.cond, b);
          if (opt_.fold_constants && c.constant() && (c.value == 1.0 || c.value == 0.0)) {
            // the dead branch still registers its leaves, so folding never
            // changes which unknown atoms carry likelihood terms
            touch(c.value == 1.0 ? *x.else_branch : *x.then_branch, b);
            return ground(c.value == 1.0 ? *x.then_branch : *x.else_branch, b);
          }
          const Operand t = ground(*x.then_branch, b);
          const Operand e = ground(*x.else_branch, b);
          return wif(c, t, e);
        } else {
          return ground_combine(x, b);
        }
      },
      f.node());
}

GraphBuilder::Operand GraphBuilder::ground_atom(const AtomRef& a, Binding& b) {
  const RelationDecl* r = model_.find_relation(a.relation);
  const auto args = bind_args(a.args, b);
  switch (r->kind) {
    case RelationKind::BooleanInput:
      return constant(ctx_.atom_value(a.relation, args));
    case RelationKind::NumericInput: {
      std::optional<double> v;
      if (data_.find_relation(a.relation)) v = data_.input_value(a.relation, args);
      if (r->learnable && !opt_.frozen_relations.contains(a.relation)) {
        const double init = v ? *v : r->range.clip(0.0);
        return {static_cast<std::int32_t>(leaf(LeafKind::NumericAtom, a.relation, args, 0, r->range, init)),
                0.0};
      }
      return constant(ctx_.atom_value(a.relation, args));
    }
    case RelationKind::Probabilistic: {
      const auto ri = static_cast<std::uint32_t>(r - model_.relations().data());
      if (auto id = ground_.find(ri, args)) {
        if (truth_[*id] == Truth::Unknown) return indicator(*id);
        return constant(truth_[*id] == Truth::True ? 1.0 : 0.0);
      }
      // outside the model: its probability is zero unless observed otherwise
      Truth t = Truth::Unknown;
      if (data_.find_relation(a.relation)) t = data_.observation(sample_, a.relation, args);
      return constant(t == Truth::True ? 1.0 : 0.0);
    }
  }
  return {};
}

void GraphBuilder::touch(const Formula& f, Binding& b) {
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, ParamRef> || std::is_same_v<T, AtomRef>) {
          ground(f, b);
        } else if constexpr (std::is_same_v<T, Binary>) {
          touch(*x.lhs, b);
          touch(*x.rhs, b);
        } else if constexpr (std::is_same_v<T, Wif>) {
          touch(*x.cond, b);
          touch(*x.then_branch, b);
          touch(*x.else_branch, b);
        } else if constexpr (std::is_same_v<T, Combine>) {
          for_each_guarded_tuple(x.bound, x.where, b, ctx_, [&] {
            for (const auto& body : x.bodies) touch(*body, b);
          });
        }
      },
      f.node());
}

GraphBuilder::Operand GraphBuilder::ground_combine(const Combine& c, Binding& b) {
  std::vector<Operand> values;
  for_each_guarded_tuple(c.bound, c.where, b, ctx_, [&] {
    for (const auto& body : c.bodies) values.push_back(ground(*body, b));
  });
  std::vector<std::pair<Operand, double>> terms;
  switch (c.fn) {
    case CombinationFunction::Sum:
    case CombinationFunction::LogisticRegression: {
      terms.reserve(values.size());
      for (const auto& v : values) terms.emplace_back(v, 1.0);
      const Operand s = linear(0.0, std::move(terms));
      return c.fn == CombinationFunction::Sum ? s : logistic_of(s);
    }
    case CombinationFunction::Mean: {
      if (values.empty()) throw EvaluationError("mean of an empty multiset");
      const double w = 1.0 / static_cast<double>(values.size());
      for (const auto& v : values) terms.emplace_back(v, w);
      return linear(0.0, std::move(terms));
    }
    case CombinationFunction::NoisyOr:
      return noisy_or(std::move(values));
  }
  return {};
}

GraphBuilder::Operand GraphBuilder::constant(double v) {
  if (opt_.fold_constants) return {-1, v};
  return {static_cast<std::int32_t>(intern(NodeOp::Constant, 0, v, 0, 0, {}, {})), 0.0};
}

GraphBuilder::Operand GraphBuilder::linear(double c0,
                                           std::vector<std::pair<Operand, double>> terms) {
  std::vector<std::pair<std::uint32_t, double>> nodes;
  nodes.reserve(terms.size());
  for (const auto& [x, w] : terms) {
    if (x.constant())
      c0 += w * x.value;
    else
      nodes.emplace_back(static_cast<std::uint32_t>(x.node), w);
  }
  if (opt_.fold_constants) {
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<std::uint32_t, double>> merged;
    for (const auto& t : nodes) {
      if (!merged.empty() && merged.back().first == t.first)
        merged.back().second += t.second;
      else
        merged.push_back(t);
    }
    std::erase_if(merged, [](const auto& t) { return t.second == 0.0; });
    nodes = std::move(merged);
    if (nodes.empty()) return constant(c0);
    if (nodes.size() == 1 && c0 == 0.0 && nodes[0].second == 1.0)
      return {static_cast<std::int32_t>(nodes[0].first), 0.0};
  }
  std::vector<std::uint32_t> ch;
  std::vector<double> w;
  for (const auto& [n, x] : nodes) {
    ch.push_back(n);
    w.push_back(x);
  }
  return {static_cast<std::int32_t>(intern(NodeOp::Linear, 0, c0, 0, 0, std::move(ch), std::move(w))),
          0.0};
}

GraphBuilder::Operand GraphBuilder::product(std::vector<Operand> factors) {
  double c = 1.0;
  std::vector<std::uint32_t> ch;
  for (const auto& x : factors) {
    if (x.constant())
      c *= x.value;
    else
      ch.push_back(static_cast<std::uint32_t>(x.node));
  }
  if (opt_.fold_constants) {
    if (c == 0.0 || ch.empty()) return constant(c);
    if (ch.size() == 1 && c == 1.0) return {static_cast<std::int32_t>(ch[0]), 0.0};
  }
  std::sort(ch.begin(), ch.end());
  return {static_cast<std::int32_t>(intern(NodeOp::Product, 0, c, 0, 0, std::move(ch), {})), 0.0};
}

GraphBuilder::Operand GraphBuilder::wif(Operand c, Operand a, Operand b) {
  if (opt_.fold_constants) {
    if (a.constant() && b.constant() && a.value == b.value) return a;
    if (c.constant()) return linear(0.0, {{a, c.value}, {b, 1.0 - c.value}});
  }
  if (c.constant()) c = {static_cast<std::int32_t>(intern(NodeOp::Constant, 0, c.value, 0, 0, {}, {})), 0.0};
  std::vector<std::uint32_t> ch{static_cast<std::uint32_t>(c.node)};
  std::uint8_t mask = 0;
  if (!a.constant()) {
    mask |= 1;
    ch.push_back(static_cast<std::uint32_t>(a.node));
  }
  if (!b.constant()) {
    mask |= 2;
    ch.push_back(static_cast<std::uint32_t>(b.node));
  }
  return {static_cast<std::int32_t>(intern(NodeOp::Wif, mask, 0.0, a.constant() ? a.value : 0.0,
                                           b.constant() ? b.value : 0.0, std::move(ch), {})),
          0.0};
}

GraphBuilder::Operand GraphBuilder::logistic_of(Operand x) {
  if (x.constant()) return constant(logistic(x.value));
  return {static_cast<std::int32_t>(
              intern(NodeOp::Logistic, 0, 0, 0, 0, {static_cast<std::uint32_t>(x.node)}, {})),
          0.0};
}

GraphBuilder::Operand GraphBuilder::noisy_or(std::vector<Operand> xs) {
  double q = 1.0;
  std::vector<std::uint32_t> ch;
  for (const auto& x : xs) {
    if (x.constant()) {
      if (!(x.value >= 0.0 && x.value <= 1.0))
        throw EvaluationError("noisy-or input " + format_number(x.value) + " outside [0,1]");
      q *= 1.0 - x.value;
    } else {
      ch.push_back(static_cast<std::uint32_t>(x.node));
    }
  }
  if (opt_.fold_constants && (ch.empty() || q == 0.0)) return constant(1.0 - q);
  std::sort(ch.begin(), ch.end());
  return {static_cast<std::int32_t>(intern(NodeOp::NoisyOr, 0, q, 0, 0, std::move(ch), {})), 0.0};
}

std::uint32_t GraphBuilder::intern(NodeOp op, std::uint8_t mask, double k0, double k1, double k2,
                                   std::vector<std::uint32_t> children,
                                   std::vector<double> weights) {
  std::string key;
  key.reserve(32 + children.size() * 4 + weights.size() * 8);
  key += static_cast<char>(op);
  key += static_cast<char>(mask);
  // +0.0 and -0.0 are the same constant
  for (double k : {k0, k1, k2}) {
    const double z = k == 0.0 ? 0.0 : k;
    append_bits(key, &z, sizeof z);
  }
  append_bits(key, children.data(), children.size() * sizeof(std::uint32_t));
  append_bits(key, weights.data(), weights.size() * sizeof(double));
  auto [it, inserted] = interned_.try_emplace(std::move(key), 0);
  if (inserted) it->second = add_node(op, mask, k0, k1, k2, children, weights);
  return it->second;
}

std::uint32_t GraphBuilder::add_node(NodeOp op, std::uint8_t mask, double k0, double k1, double k2,
                                     const std::vector<std::uint32_t>& children,
                                     const std::vector<double>& weights) {
  const auto id = static_cast<std::uint32_t>(g_.op_.size());
  g_.op_.push_back(op);
  g_.mask_.push_back(mask);
  g_.k0_.push_back(k0);
  g_.k1_.push_back(k1);
  g_.k2_.push_back(k2);
  g_.children_.insert(g_.children_.end(), children.begin(), children.end());
  if (op == NodeOp::Linear)
    g_.weights_.insert(g_.weights_.end(), weights.begin(), weights.end());
  else
    g_.weights_.resize(g_.children_.size(), 0.0);
  g_.child_begin_.push_back(static_cast<std::uint32_t>(g_.children_.size()));
  return id;
}

// ---------------------------------------------------------------------------

LikelihoodGraph LikelihoodGraph::build(const Model& model, const DataSet& data,
                                       const BuildOptions& options) {
  for (const auto& [name, value] : options.fixed_parameters) {
    const ParameterDecl* p = model.find_parameter(name);
    if (!p) throw ModelError("cannot fix unknown parameter '" + name + "'");
    if (!p->range.contains(value))
      throw ModelError("fixed value " + format_number(value) + " outside the range of '" + name + "'");
  }
  for (const auto& name : options.frozen_relations) {
    const RelationDecl* r = model.find_relation(name);
    if (!r || r->kind != RelationKind::NumericInput)
      throw ModelError("cannot freeze '" + name + "': not a numeric input relation");
  }
  for (const auto& r : data.relations()) {
    const RelationDecl* d = model.find_relation(r.name);
    if (d && (d->arity != r.arity || (d->kind == RelationKind::Probabilistic) !=
                                         (r.kind == RelationKind::Probabilistic)))
      throw DataError("relation '" + r.name + "' in the data does not match its declaration");
  }
  LikelihoodGraph g;
  GraphBuilder(model, data, options, g).run();
  return g;
}

std::optional<std::size_t> LikelihoodGraph::find_parameter(std::string_view name) const {
  auto it = leaf_index_.find(leaf_key(LeafKind::Parameter, name, {}, 0));
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> LikelihoodGraph::find_numeric(std::string_view relation,
                                                        std::span<const int> args) const {
  auto it = leaf_index_.find(leaf_key(LeafKind::NumericAtom, relation, args, 0));
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> LikelihoodGraph::find_indicator(std::size_t sample,
                                                          std::string_view relation,
                                                          std::span<const int> args) const {
  auto it = leaf_index_.find(leaf_key(LeafKind::Indicator, relation, args, sample));
  if (it == leaf_index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::size_t> LikelihoodGraph::leaves_of(LeafKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < leaves_.size(); ++i)
    if (leaves_[i].kind == kind) out.push_back(i);
  return out;
}

std::vector<double> LikelihoodGraph::initial_values() const {
  std::vector<double> v;
  v.reserve(leaves_.size());
  for (const auto& l : leaves_) v.push_back(l.initial);
  return v;
}

GraphStats LikelihoodGraph::stats() const {
  GraphStats s;
  s.nodes = op_.size() + tops_.size() + 1;
  s.edges = children_.size() + tops_.size();
  s.observed_terms = folded_terms_;
  for (const auto& t : tops_) {
    if (t.prob_node >= 0) ++s.edges;
    if (t.indicator >= 0) ++s.edges;
    if (t.observed < 0)
      ++s.unknown_terms;
    else
      ++s.observed_terms;
  }
  for (const auto& l : leaves_) {
    switch (l.kind) {
      case LeafKind::Parameter: ++s.parameters; break;
      case LeafKind::NumericAtom: ++s.numeric_leaves; break;
      case LeafKind::Indicator: ++s.indicators; break;
    }
  }
  return s;
}

std::string LikelihoodGraph::to_dot() const {
  std::ostringstream out;
  out << "digraph likelihood {\n  rankdir=BT;\n  root [label=\"log L\", shape=doublecircle];\n";
  for (std::uint32_t v = 0; v < op_.size(); ++v) {
    std::string label;
    switch (op_[v]) {
      case NodeOp::Leaf: {
        const Leaf& l = leaves_[static_cast<std::size_t>(leaf_of_node_[v])];
        label = l.kind == LeafKind::Parameter ? l.name : to_string(GroundAtom{l.name, l.args});
        if (l.kind == LeafKind::Indicator) label = "I[" + label + "]";
        out << "  n" << v << " [shape=box, label=\"" << label << "\"];\n";
        continue;
      }
      case NodeOp::Constant: label = format_number(k0_[v]); break;
      case NodeOp::Linear: label = "+ " + format_number(k0_[v]); break;
      case NodeOp::Product: label = "* " + format_number(k0_[v]); break;
      case NodeOp::Wif: label = "wif"; break;
      case NodeOp::Logistic: label = "logistic"; break;
      case NodeOp::NoisyOr: label = "noisy-or"; break;
    }
    out << "  n" << v << " [label=\"" << label << "\"];\n";
    for (std::uint32_t c : children(v)) out << "  n" << c << " -> n" << v << ";\n";
  }
  for (std::size_t i = 0; i < tops_.size(); ++i) {
    const Top& t = tops_[i];
    std::string atom = to_string(GroundAtom{model_->relations()[t.relation].name, t.args});
    out << "  t" << i << " [shape=ellipse, label=\"" << atom;
    if (t.observed >= 0) out << (t.observed ? " = 1" : " = 0");
    out << "\"];\n";
    if (t.prob_node >= 0) out << "  n" << t.prob_node << " -> t" << i << ";\n";
    if (t.indicator >= 0) out << "  n" << leaves_[static_cast<std::size_t>(t.indicator)].node << " -> t" << i << ";\n";
    out << "  t" << i << " -> root;\n";
  }
  out << "}\n";
  return out.str();
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(const LikelihoodGraph& graph)
    : g_(&graph),
      leaf_values_(graph.initial_values()),
      values_(graph.node_count(), 0.0),
      dirty_(graph.node_count(), 0) {}

void Evaluator::set_leaf_value(std::size_t leaf, double value) {
  if (leaf_values_[leaf] == value) return;
  leaf_values_[leaf] = value;
  if (!all_dirty_) mark_dirty(g_->leaves_[leaf].node);
}

void Evaluator::set_leaf_values(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) set_leaf_value(i, values[i]);
}

void Evaluator::mark_dirty(std::uint32_t node) {
  if (dirty_[node]) return;
  std::vector<std::uint32_t> stack{node};
  dirty_[node] = 1;
  while (!stack.empty()) {
    const std::uint32_t v = stack.back();
    stack.pop_back();
    dirty_list_.push_back(v);
    for (std::uint32_t i = g_->parent_begin_[v]; i < g_->parent_begin_[v + 1]; ++i) {
      const std::uint32_t p = g_->parents_[i];
      if (!dirty_[p]) {
        dirty_[p] = 1;
        stack.push_back(p);
      }
    }
  }
}

double Evaluator::compute(std::uint32_t v) {
  const LikelihoodGraph& g = *g_;
  const std::uint32_t b = g.child_begin_[v], e = g.child_begin_[v + 1];
  edge_visits_ += e - b;
  switch (g.op_[v]) {
    case NodeOp::Leaf: return leaf_values_[static_cast<std::size_t>(g.leaf_of_node_[v])];
    case NodeOp::Constant: return g.k0_[v];
    case NodeOp::Linear: {
      double s = g.k0_[v];
      for (std::uint32_t i = b; i < e; ++i) s += g.weights_[i] * values_[g.children_[i]];
      return s;
    }
    case NodeOp::Product: {
      double p = g.k0_[v];
      for (std::uint32_t i = b; i < e; ++i) p *= values_[g.children_[i]];
      return p;
    }
    case NodeOp::Wif: {
      std::uint32_t i = b;
      const double c = values_[g.children_[i++]];
      const double t = (g.mask_[v] & 1) ? values_[g.children_[i++]] : g.k1_[v];
      const double f = (g.mask_[v] & 2) ? values_[g.children_[i++]] : g.k2_[v];
      return c * t + (1.0 - c) * f;
    }
    case NodeOp::Logistic: return logistic(values_[g.children_[b]]);
    case NodeOp::NoisyOr: {
      double q = g.k0_[v];
      for (std::uint32_t i = b; i < e; ++i) {
        const double x = values_[g.children_[i]];
        if (!(x >= 0.0 && x <= 1.0))
          throw NumericalError("noisy-or input " + format_number(x) + " outside [0,1]");
        q *= 1.0 - x;
      }
      return 1.0 - q;
    }
  }
  return 0.0;
}

void Evaluator::refresh() {
  if (all_dirty_) {
    for (std::uint32_t v = 0; v < values_.size(); ++v) values_[v] = compute(v);
    last_recomputed_ = values_.size();
    all_dirty_ = false;
    dirty_list_.clear();
    std::fill(dirty_.begin(), dirty_.end(), 0);
    return;
  }
  if (dirty_list_.empty()) {
    last_recomputed_ = 0;
    return;
  }
  std::sort(dirty_list_.begin(), dirty_list_.end());
  for (std::uint32_t v : dirty_list_) {
    values_[v] = compute(v);
    dirty_[v] = 0;
  }
  last_recomputed_ = dirty_list_.size();
  dirty_list_.clear();
}

double Evaluator::node_value(std::uint32_t node) {
  refresh();
  return values_[node];
}

double Evaluator::probability(std::size_t top) {
  refresh();
  const Top& t = g_->tops_[top];
  return t.prob_node >= 0 ? values_[static_cast<std::uint32_t>(t.prob_node)] : t.prob_constant;
}

double Evaluator::log_likelihood() {
  refresh();
  double ll = g_->constant_ll_;
  for (const Top& t : g_->tops_) {
    const double p = t.prob_node >= 0 ? values_[static_cast<std::uint32_t>(t.prob_node)] : t.prob_constant;
    const bool truth = t.observed >= 0 ? t.observed == 1
                                       : leaf_values_[static_cast<std::size_t>(t.indicator)] > 0.5;
    ll += term_log(p, truth);
  }
  return ll;
}

const std::vector<double>& Evaluator::gradient() {
  refresh();
  const LikelihoodGraph& g = *g_;
  const std::size_t n = values_.size();
  adjoint_.assign(n, 0.0);
  gradient_.assign(g.leaves_.size(), 0.0);
  for (const Top& t : g.tops_) {
    const double p = t.prob_node >= 0 ? values_[static_cast<std::uint32_t>(t.prob_node)] : t.prob_constant;
    if (t.observed >= 0) {
      if (t.prob_node >= 0) adjoint_[static_cast<std::uint32_t>(t.prob_node)] += term_log_derivative(p, t.observed == 1);
      continue;
    }
    const auto ind = static_cast<std::size_t>(t.indicator);
    const bool truth = leaf_values_[ind] > 0.5;
    if (t.prob_node >= 0) adjoint_[static_cast<std::uint32_t>(t.prob_node)] += term_log_derivative(p, truth);
    adjoint_[g.leaves_[ind].node] += term_log(p, true) - term_log(p, false);
  }
  for (std::size_t vi = n; vi-- > 0;) {
    const auto v = static_cast<std::uint32_t>(vi);
    const double a = adjoint_[v];
    if (a == 0.0) continue;
    const std::uint32_t b = g.child_begin_[v], e = g.child_begin_[v + 1];
    edge_visits_ += e - b;
    switch (g.op_[v]) {
      case NodeOp::Leaf:
        gradient_[static_cast<std::size_t>(g.leaf_of_node_[v])] += a;
        break;
      case NodeOp::Constant:
        break;
      case NodeOp::Linear:
        for (std::uint32_t i = b; i < e; ++i) adjoint_[g.children_[i]] += a * g.weights_[i];
        break;
      case NodeOp::Product: {
        const std::uint32_t m = e - b;
        if (m == 1) {
          adjoint_[g.children_[b]] += a * g.k0_[v];
        } else if (m == 2) {
          adjoint_[g.children_[b]] += a * g.k0_[v] * values_[g.children_[b + 1]];
          adjoint_[g.children_[b + 1]] += a * g.k0_[v] * values_[g.children_[b]];
        } else {
          // prefix products, then a backward sweep with a running suffix
          scratch_.resize(m);
          double acc = g.k0_[v];
          for (std::uint32_t j = 0; j < m; ++j) {
            scratch_[j] = acc;
            acc *= values_[g.children_[b + j]];
          }
          double suffix = 1.0;
          for (std::uint32_t j = m; j-- > 0;) {
            adjoint_[g.children_[b + j]] += a * scratch_[j] * suffix;
            suffix *= values_[g.children_[b + j]];
          }
        }
        break;
      }
      case NodeOp::Wif: {
        std::uint32_t i = b;
        const std::uint32_t cn = g.children_[i++];
        const double c = values_[cn];
        double t = g.k1_[v], f = g.k2_[v];
        if (g.mask_[v] & 1) {
          const std::uint32_t tn = g.children_[i++];
          t = values_[tn];
          adjoint_[tn] += a * c;
        }
        if (g.mask_[v] & 2) {
          const std::uint32_t fn = g.children_[i++];
          f = values_[fn];
          adjoint_[fn] += a * (1.0 - c);
        }
        adjoint_[cn] += a * (t - f);
        break;
      }
      case NodeOp::Logistic: {
        const double s = values_[v];
        adjoint_[g.children_[b]] += a * s * (1.0 - s);
        break;
      }
      case NodeOp::NoisyOr: {
        const std::uint32_t m = e - b;
        scratch_.resize(m);
        double acc = g.k0_[v];
        for (std::uint32_t j = 0; j < m; ++j) {
          scratch_[j] = acc;
          acc *= 1.0 - values_[g.children_[b + j]];
        }
        double suffix = 1.0;
        for (std::uint32_t j = m; j-- > 0;) {
          adjoint_[g.children_[b + j]] += a * scratch_[j] * suffix;
          suffix *= 1.0 - values_[g.children_[b + j]];
        }
        break;
      }
    }
  }
  return gradient_;
}

}  // namespace rbn
