#include "rbn/community.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <set>

#include "rbn/error.hpp"
#include "rbn/likelihood_graph.hpp"
#include "rbn/model_parser.hpp"

namespace rbn {

std::string_view to_string(CommunityVariant v) {
  switch (v) {
    case CommunityVariant::InnerProduct: return "inner-product";
    case CommunityVariant::Distance: return "distance";
    case CommunityVariant::MultiRelational: return "multi-relational";
  }
  return "?";
}

CommunityVariant community_variant_from_name(std::string_view name) {
  if (name == "inner-product") return CommunityVariant::InnerProduct;
  if (name == "distance") return CommunityVariant::Distance;
  if (name == "multi-relational") return CommunityVariant::MultiRelational;
  throw ModelError("unknown community model variant '" + std::string(name) + "'");
}

std::string alpha_name(const CommunitySpec& spec, std::size_t relation) {
  if (spec.variant != CommunityVariant::MultiRelational) return "alpha";
  return "alpha_" + spec.relations.at(relation);
}

std::string association_name(const std::string& relation) { return "t_" + relation; }

namespace {

void validate(const CommunitySpec& spec) {
  if (spec.communities < 0) throw ModelError("number of communities must be non-negative");
  if (spec.relations.empty()) throw ModelError("community model needs at least one relation");
  if (spec.variant != CommunityVariant::MultiRelational && spec.relations.size() != 1)
    throw ModelError(std::string(to_string(spec.variant)) +
                     " model takes exactly one relation; use multi-relational for " +
                     std::to_string(spec.relations.size()));
  if (spec.distance_sign != 1 && spec.distance_sign != -1)
    throw ModelError("distance sign must be +1 or -1");
  std::set<std::string> reserved{kNodeRelation, kCommunityRelation, kMembershipRelation};
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    reserved.insert(alpha_name(spec, i));
    if (spec.variant == CommunityVariant::MultiRelational)
      reserved.insert(association_name(spec.relations[i]));
  }
  std::set<std::string> seen;
  for (const auto& r : spec.relations) {
    if (reserved.contains(r)) throw ModelError("relation name '" + r + "' clashes with a model name");
    if (!seen.insert(r).second) throw ModelError("duplicate relation '" + r + "'");
  }
}

std::string community_range(const CommunitySpec& spec) {
  return spec.u_nonnegative() ? " [0, inf]" : "";
}

}  // namespace

std::string community_model_text(const CommunitySpec& spec) {
  validate(spec);
  std::string s;
  s += "input node/1;\ninput community/1;\n";
  s += "input u/2 numeric" + community_range(spec) + " learnable;\n";
  const bool multi = spec.variant == CommunityVariant::MultiRelational;
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    if (multi) s += "input " + association_name(spec.relations[i]) + "/1 numeric learnable;\n";
    s += "param " + alpha_name(spec, i) + ";\n";
    s += "prob " + spec.relations[i] + "/2;\n";
  }
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    std::string body;
    switch (spec.variant) {
      case CommunityVariant::InnerProduct: body = "u(V, C) * u(W, C)"; break;
      case CommunityVariant::Distance:
        body = (spec.distance_sign < 0 ? "-1 * " : "") +
               std::string("(u(V, C) - u(W, C)) * (u(V, C) - u(W, C))");
        break;
      case CommunityVariant::MultiRelational:
        body = "u(V, C) * u(W, C) * " + association_name(spec.relations[i]) + "(C)";
        break;
    }
    s += spec.relations[i] + "(V, W) WHERE node(V) & node(W) & V != W <-\n  COMBINE " +
         alpha_name(spec, i) + ",\n    COMBINE " + body +
         " WITH sum FORALL C WHERE community(C)\n  WITH l-reg;\n";
  }
  return s;
}

Model build_community_model(const CommunitySpec& spec) {
  return parse_model(community_model_text(spec));
}

namespace {

DataSet extend(const DataSet& d, std::vector<std::string> extra_objects,
               std::vector<RelationSchema> extra_relations) {
  std::vector<std::string> objects = d.labels();
  objects.insert(objects.end(), extra_objects.begin(), extra_objects.end());
  std::vector<RelationSchema> relations = d.relations();
  relations.insert(relations.end(), extra_relations.begin(), extra_relations.end());
  DataSet out(std::move(objects), std::move(relations));
  for (std::size_t s = 1; s < d.sample_count(); ++s) out.add_sample();
  for (const auto& r : d.relations()) {
    if (r.kind == RelationKind::Probabilistic) {
      for (std::size_t s = 0; s < d.sample_count(); ++s)
        for (const auto& [args, t] : d.stored_observations(s, r.name))
          out.set_observation(s, r.name, args, t, false);
    } else {
      for (const auto& e : d.stored_inputs(r.name)) out.set_input(r.name, e.args, e.value);
    }
  }
  return out;
}

std::string fresh_name(const DataSet& d, std::string base) {
  while (d.find_relation(base) || d.find_object(base)) base += "_";
  return base;
}

}  // namespace

DataSet with_community_domain(const DataSet& d, int communities) {
  for (const char* name : {kNodeRelation, kCommunityRelation, kMembershipRelation})
    if (d.find_relation(name))
      throw DataError(std::string("data already has a relation named '") + name + "'");
  std::vector<std::string> extra;
  for (int c = 1; c <= communities; ++c) {
    std::string label = "c" + std::to_string(c);
    while (d.find_object(label)) label = "_" + label;
    extra.push_back(label);
  }
  DataSet out = extend(d, extra,
                       {{kNodeRelation, 1, RelationKind::BooleanInput, {}, true, true},
                        {kCommunityRelation, 1, RelationKind::BooleanInput, {}, true, true}});
  const int n = static_cast<int>(d.object_count());
  for (int i = 0; i < n; ++i) out.set_input(kNodeRelation, std::vector<int>{i}, 1.0);
  for (int c = 0; c < communities; ++c) out.set_input(kCommunityRelation, std::vector<int>{n + c}, 1.0);
  return out;
}

std::vector<std::string> probabilistic_relations(const DataSet& d) {
  std::vector<std::string> out;
  for (const auto& r : d.relations())
    if (r.kind == RelationKind::Probabilistic) out.push_back(r.name);
  return out;
}

ErBaseline er_baseline(const DataSet& d, const std::vector<std::string>& relations) {
  ErBaseline out;
  for (const auto& rel : relations) {
    const RelationSchema& r = d.relation(rel);
    if (r.kind != RelationKind::Probabilistic || r.arity != 2)
      throw DataError("ER baseline needs a binary probabilistic relation ('" + rel + "')");
    double n1 = 0, n0 = 0;
    for (std::size_t s = 0; s < d.sample_count(); ++s) {
      n1 += static_cast<double>(count_atoms(d, rel, Truth::True, s));
      n0 += static_cast<double>(count_atoms(d, rel, Truth::False, s));
    }
    if (n1 + n0 == 0) throw DataError("relation '" + rel + "' has no known atoms");
    const double p = std::clamp(n1 / (n1 + n0), kProbabilityClamp, 1.0 - kProbabilityClamp);
    out.alphas[rel] = std::log(p / (1.0 - p));
    out.log_likelihood += n1 * std::log(p) + n0 * std::log1p(-p);
  }
  return out;
}

CommunityResult fit_community_model(const DataSet& d, const CommunitySpec& spec,
                                    const FitConfig& config) {
  const Model model = build_community_model(spec);
  const DataSet aug = with_community_domain(d, spec.communities);
  const auto t0 = std::chrono::steady_clock::now();
  const LikelihoodGraph g = LikelihoodGraph::build(model, aug);
  CommunityResult r;
  r.spec = spec;
  r.build_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const GraphStats st = g.stats();
  r.graph_nodes = st.nodes;
  r.observed_atoms = st.observed_terms;
  r.fit = fit(g, config);
  r.log_likelihood = r.fit.log_likelihood;

  const int n = static_cast<int>(d.object_count());
  const auto& v = r.fit.leaf_values;
  r.nodes = d.labels();
  r.u.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(spec.communities), 0.0));
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < spec.communities; ++c)
      if (auto leaf = g.find_numeric(kMembershipRelation, std::vector<int>{i, n + c}))
        r.u[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = v[*leaf];
  if (spec.variant == CommunityVariant::MultiRelational) {
    for (const auto& rel : spec.relations) {
      std::vector<double> row(static_cast<std::size_t>(spec.communities), 0.0);
      for (int c = 0; c < spec.communities; ++c)
        if (auto leaf = g.find_numeric(association_name(rel), std::vector<int>{n + c}))
          row[static_cast<std::size_t>(c)] = v[*leaf];
      r.t.push_back(std::move(row));
    }
  }
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    const auto name = alpha_name(spec, i);
    if (auto leaf = g.find_parameter(name)) r.alphas[name] = v[*leaf];
  }
  return r;
}

double likelihood_gain(const DataSet& d, const std::vector<std::string>& relations,
                       const std::vector<double>& u_column, const FitConfig& config,
                       double baseline_log_likelihood) {
  if (u_column.size() != d.object_count())
    throw DataError("u column has " + std::to_string(u_column.size()) + " entries for " +
                    std::to_string(d.object_count()) + " nodes");
  const std::string ucol = fresh_name(d, "ucol");
  DataSet data = extend(d, {}, {{ucol, 1, RelationKind::NumericInput, {}, true, true}});
  for (std::size_t i = 0; i < u_column.size(); ++i)
    data.set_input(ucol, std::vector<int>{static_cast<int>(i)}, u_column[i]);

  std::string text = "input " + ucol + "/1 numeric;\n";
  for (const auto& rel : relations)
    text += "param alpha_" + rel + ";\nparam t_" + rel + ";\nprob " + rel + "/2;\n";
  for (const auto& rel : relations)
    text += rel + "(V, W) WHERE V != W <- COMBINE alpha_" + rel + ", " + ucol + "(V) * " + ucol +
            "(W) * t_" + rel + " WITH l-reg;\n";
  const Model model = parse_model(text);
  const LikelihoodGraph g = LikelihoodGraph::build(model, data);
  return fit(g, config).log_likelihood - baseline_log_likelihood;
}

SignificanceReport significance(const DataSet& d, const CommunityResult& r, const FitConfig& config) {
  SignificanceReport rep;
  rep.baseline_log_likelihood = er_baseline(d, r.spec.relations).log_likelihood;
  const std::size_t k = static_cast<std::size_t>(r.spec.communities);
  FitConfig inner = config;
  inner.threads = 1;
  std::vector<std::future<double>> jobs;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> column;
    for (const auto& row : r.u) column.push_back(row[c]);
    jobs.push_back(std::async(std::launch::async, [&, column = std::move(column)] {
      return likelihood_gain(d, r.spec.relations, column, inner, rep.baseline_log_likelihood);
    }));
  }
  for (auto& j : jobs) {
    rep.gains.push_back(j.get());
    rep.log_likelihoods.push_back(rep.gains.back() + rep.baseline_log_likelihood);
  }
  return rep;
}

RefitResult refit_alphas(const DataSet& d, const CommunitySpec& spec, const Matrix& u,
                         const Matrix& t, const FitConfig& config) {
  const Model model = build_community_model(spec);
  const int n = static_cast<int>(d.object_count());
  const auto C = static_cast<std::size_t>(spec.communities);
  if (u.size() != d.object_count() || std::any_of(u.begin(), u.end(), [&](const auto& row) { return row.size() != C; }))
    throw DataError("u matrix does not match nodes x communities");
  const bool multi = spec.variant == CommunityVariant::MultiRelational;
  if (multi && (t.size() != spec.relations.size() ||
                std::any_of(t.begin(), t.end(), [&](const auto& row) { return row.size() != C; })))
    throw DataError("t matrix does not match relations x communities");

  DataSet base = with_community_domain(d, spec.communities);
  std::vector<RelationSchema> numeric{{kMembershipRelation, 2, RelationKind::NumericInput,
                                       model.find_relation(kMembershipRelation)->range, true, true}};
  if (multi)
    for (const auto& rel : spec.relations)
      numeric.push_back({association_name(rel), 1, RelationKind::NumericInput, {}, true, true});
  DataSet aug = extend(base, {}, numeric);
  BuildOptions opts;
  for (int i = 0; i < n; ++i)
    for (std::size_t c = 0; c < C; ++c)
      aug.set_input(kMembershipRelation, std::vector<int>{i, n + static_cast<int>(c)},
                    u[static_cast<std::size_t>(i)][c]);
  opts.frozen_relations.insert(kMembershipRelation);
  if (multi) {
    for (std::size_t i = 0; i < spec.relations.size(); ++i) {
      const auto name = association_name(spec.relations[i]);
      opts.frozen_relations.insert(name);
      for (std::size_t c = 0; c < C; ++c)
        aug.set_input(name, std::vector<int>{n + static_cast<int>(c)}, t[i][c]);
    }
  }
  const LikelihoodGraph g = LikelihoodGraph::build(model, aug, opts);
  const FitResult f = fit(g, config);
  RefitResult out;
  out.log_likelihood = f.log_likelihood;
  for (std::size_t i = 0; i < spec.relations.size(); ++i) {
    const auto name = alpha_name(spec, i);
    if (auto leaf = g.find_parameter(name)) out.alphas[name] = f.leaf_values[*leaf];
  }
  return out;
}

Matrix column_correlations(const Matrix& a, const Matrix& b) {
  if (a.size() != b.size()) throw DataError("correlated matrices have different row counts");
  const std::size_t n = a.size();
  const std::size_t ca = n ? a[0].size() : 0, cb = n ? b[0].size() : 0;
  auto column_stats = [n](const Matrix& m, std::size_t c) {
    const bool constant = std::all_of(m.begin(), m.end(), [&](const auto& row) { return row[c] == m[0][c]; });
    if (constant) return std::pair{m[0][c], 0.0};
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += m[i][c];
    mean /= static_cast<double>(n);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += (m[i][c] - mean) * (m[i][c] - mean);
    return std::pair{mean, std::sqrt(ss)};
  };
  Matrix r(ca, std::vector<double>(cb, 0.0));
  for (std::size_t i = 0; i < ca; ++i) {
    const auto [ma, sa] = column_stats(a, i);
    for (std::size_t j = 0; j < cb; ++j) {
      const auto [mb, sb] = column_stats(b, j);
      if (sa == 0.0 || sb == 0.0) continue;
      double cov = 0;
      for (std::size_t k = 0; k < n; ++k) cov += (a[k][i] - ma) * (b[k][j] - mb);
      r[i][j] = cov / (sa * sb);
    }
  }
  return r;
}

std::vector<std::size_t> max_weight_assignment(const Matrix& w) {
  // Hungarian algorithm with potentials on cost = -weight, 1-based internally.
  const std::size_t n = w.size();
  for (const auto& row : w)
    if (row.size() != n) throw DataError("assignment matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -w[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<std::size_t> out(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j]) out[p[j] - 1] = j - 1;
  return out;
}

CommunityMatch match_communities(const Matrix& reference, const Matrix& other) {
  if (reference.size() != other.size()) throw DataError("u matrices have different node counts");
  if (!reference.empty() && reference[0].size() != other[0].size())
    throw DataError("u matrices have different community counts");
  CommunityMatch m;
  m.correlations = column_correlations(reference, other);
  m.permutation = max_weight_assignment(m.correlations);
  for (std::size_t i = 0; i < m.permutation.size(); ++i)
    m.matched.push_back(m.correlations[i][m.permutation[i]]);
  return m;
}

int heat_level(double r) {
  if (r > 0.7) return 3;
  if (r > 0.5) return 2;
  if (r > 0.3) return 1;
  return 0;
}

std::vector<SubsampleRun> subsample_experiment(const DataSet& d, const CommunitySpec& spec,
                                               const std::vector<double>& q_list,
                                               const FitConfig& config, std::uint64_t seed) {
  if (q_list.empty()) throw DataError("empty q list");
  std::vector<SubsampleRun> runs;
  for (double q : q_list) {
    const DataSet dq = q >= 100.0 ? d : subsample_false_links(d, spec.relations, q, seed);
    SubsampleRun run;
    run.q = q;
    run.result = fit_community_model(dq, spec, config);
    run.observed_atoms = run.result.observed_atoms;
    for (const auto& r : run.result.fit.restarts) {
      run.restart_seconds.push_back(r.seconds);
      run.restart_iterations.push_back(r.iterations);
    }
    run.refit = refit_alphas(d, spec, run.result.u, run.result.t, config);
    run.match = match_communities(runs.empty() ? run.result.u : runs.front().result.u, run.result.u);
    runs.push_back(std::move(run));
  }
  return runs;
}

}  // namespace rbn
