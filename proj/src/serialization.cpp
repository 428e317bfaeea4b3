#include "rbn/serialization.hpp"

#include <cmath>
#include <sstream>

#include "rbn/error.hpp"

namespace rbn {

namespace {

Json labelled(const std::vector<int>& args, const std::vector<std::string>& labels) {
  Json a = Json::array();
  for (int x : args)
    a.push_back(static_cast<std::size_t>(x) < labels.size() ? Json(labels[static_cast<std::size_t>(x)])
                                                          : Json(x));
  return a;
}

// JSON has no infinities; non-finite values are written as strings.
Json number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

}  // namespace

Json fit_to_json(const LikelihoodGraph& g, const FitResult& r, const std::vector<std::string>& labels) {
  Json j;
  j["best_ll"] = number(r.log_likelihood);
  j["best_restart"] = r.best_restart;
  j["params"] = Json::object();
  j["numeric_atoms"] = Json::array();
  j["unknown_atoms"] = Json::array();
  for (std::size_t i = 0; i < g.leaves().size(); ++i) {
    const Leaf& l = g.leaves()[i];
    const double v = r.leaf_values.at(i);
    switch (l.kind) {
      case LeafKind::Parameter: j["params"][l.name] = number(v); break;
      case LeafKind::NumericAtom:
        j["numeric_atoms"].push_back({{"rel", l.name}, {"args", labelled(l.args, labels)}, {"value", number(v)}});
        break;
      case LeafKind::Indicator:
        j["unknown_atoms"].push_back({{"rel", l.name},
                                      {"args", labelled(l.args, labels)},
                                      {"sample", l.sample},
                                      {"value", v > 0.5}});
        break;
    }
  }
  j["restart_lls"] = Json::array();
  j["restarts"] = Json::array();
  for (const auto& rr : r.restarts) {
    j["restart_lls"].push_back(number(rr.log_likelihood));
    j["restarts"].push_back({{"ll", number(rr.log_likelihood)},
                             {"iterations", rr.iterations},
                             {"seconds", rr.seconds},
                             {"converged", rr.converged}});
  }
  j["trace"] = Json::array();
  if (!r.restarts.empty())
    for (double x : r.restarts[r.best_restart].trace) j["trace"].push_back(number(x));
  return j;
}

std::string trace_csv(const FitResult& r) {
  std::ostringstream out;
  out << "restart,step,log_likelihood\n";
  for (std::size_t i = 0; i < r.restarts.size(); ++i)
    for (std::size_t k = 0; k < r.restarts[i].trace.size(); ++k)
      out << i << ',' << k + 1 << ',' << format_number(r.restarts[i].trace[k]) << '\n';
  return out.str();
}

Json stats_to_json(const GraphStats& s) {
  return {{"nodes", s.nodes},
          {"edges", s.edges},
          {"params", s.parameters},
          {"numeric_leaves", s.numeric_leaves},
          {"indicators", s.indicators},
          {"observed_atoms", s.observed_terms},
          {"unobserved_atoms", s.unknown_terms}};
}

Json community_to_json(const CommunityResult& r) {
  Json j;
  j["variant"] = std::string(to_string(r.spec.variant));
  j["communities"] = r.spec.communities;
  j["relations"] = r.spec.relations;
  j["distance_sign"] = r.spec.distance_sign;
  j["nonnegative_u"] = r.spec.u_nonnegative();
  j["nodes"] = r.nodes;
  j["u"] = r.u;
  j["t"] = r.t;
  j["alphas"] = r.alphas;
  j["log_likelihood"] = number(r.log_likelihood);
  j["best_restart"] = r.fit.best_restart;
  j["restart_lls"] = Json::array();
  j["restart_seconds"] = Json::array();
  for (const auto& rr : r.fit.restarts) {
    j["restart_lls"].push_back(number(rr.log_likelihood));
    j["restart_seconds"].push_back(rr.seconds);
  }
  j["graph_nodes"] = r.graph_nodes;
  j["observed_atoms"] = r.observed_atoms;
  j["build_seconds"] = r.build_seconds;
  return j;
}

CommunityResult community_from_json(const Json& j) {
  try {
    CommunityResult r;
    r.spec.variant = community_variant_from_name(j.at("variant").get<std::string>());
    r.spec.communities = j.at("communities").get<int>();
    r.spec.relations = j.at("relations").get<std::vector<std::string>>();
    r.spec.distance_sign = j.value("distance_sign", -1);
    if (j.contains("nonnegative_u")) r.spec.nonnegative_u = j.at("nonnegative_u").get<bool>();
    r.nodes = j.at("nodes").get<std::vector<std::string>>();
    r.u = j.at("u").get<Matrix>();
    r.t = j.value("t", Matrix{});
    r.alphas = j.value("alphas", std::map<std::string, double>{});
    if (j.contains("log_likelihood") && j.at("log_likelihood").is_number())
      r.log_likelihood = j.at("log_likelihood").get<double>();
    if (r.u.size() != r.nodes.size()) throw DataError("u has " + std::to_string(r.u.size()) + " rows for " + std::to_string(r.nodes.size()) + " nodes");
    return r;
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed community result: ") + e.what());
  }
}

std::string matrix_csv(const std::vector<std::string>& row_names, const Matrix& m,
                       const std::string& corner) {
  std::ostringstream out;
  out << corner;
  const std::size_t cols = m.empty() ? 0 : m[0].size();
  for (std::size_t c = 0; c < cols; ++c) out << ",C" << c + 1;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << (i < row_names.size() ? row_names[i] : std::to_string(i));
    for (double x : m[i]) out << ',' << format_number(x);
    out << '\n';
  }
  return out.str();
}

Json significance_to_json(const SignificanceReport& r) {
  Json j;
  j["baseline_ll"] = number(r.baseline_log_likelihood);
  j["gains"] = Json::array();
  j["log_likelihoods"] = Json::array();
  for (double g : r.gains) j["gains"].push_back(number(g));
  for (double l : r.log_likelihoods) j["log_likelihoods"].push_back(number(l));
  return j;
}

Json subsample_to_json(const std::vector<SubsampleRun>& runs) {
  Json out = Json::array();
  for (const auto& run : runs) {
    Json heat = Json::array();
    for (const auto& row : run.match.correlations) {
      Json h = Json::array();
      for (double x : row) h.push_back(heat_level(x));
      heat.push_back(h);
    }
    out.push_back({{"q", run.q},
                   {"observed_atoms", run.observed_atoms},
                   {"restart_seconds", run.restart_seconds},
                   {"restart_iterations", run.restart_iterations},
                   {"log_likelihood", number(run.result.log_likelihood)},
                   {"refit_alphas", run.refit.alphas},
                   {"refit_ll", number(run.refit.log_likelihood)},
                   {"permutation", run.match.permutation},
                   {"matched_correlations", run.match.matched},
                   {"correlations", run.match.correlations},
                   {"heat", heat},
                   {"result", community_to_json(run.result)}});
  }
  return out;
}

}  // namespace rbn
