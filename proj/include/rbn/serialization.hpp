#pragma once

// JSON and CSV forms of fitting and community results.

#include <string>
#include <vector>

#include "json.hpp"

#include "rbn/community.hpp"
#include "rbn/learner.hpp"
#include "rbn/likelihood_graph.hpp"

namespace rbn {

using Json = nlohmann::json;

// {best_ll, params, numeric_atoms:[{rel,args,value}], unknown_atoms, restart_lls,
//  restarts, trace}. Atom arguments are object labels.
Json fit_to_json(const LikelihoodGraph& g, const FitResult& r, const std::vector<std::string>& labels);

// restart,step,log_likelihood
std::string trace_csv(const FitResult& r);

Json stats_to_json(const GraphStats& s);

Json community_to_json(const CommunityResult& r);
CommunityResult community_from_json(const Json& j);  // spec, nodes, u, t, alphas, LL

// First column holds row names, one column per community.
std::string matrix_csv(const std::vector<std::string>& row_names, const Matrix& m,
                       const std::string& corner = "");

Json significance_to_json(const SignificanceReport& r);
Json subsample_to_json(const std::vector<SubsampleRun>& runs);

}  // namespace rbn
