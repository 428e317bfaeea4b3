#pragma once

// Shared test helpers: fixture paths, an independent log-likelihood oracle and
// random model generators.

#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rbn/dataset.hpp"
#include "rbn/formula.hpp"
#include "rbn/likelihood_graph.hpp"

namespace rbn::testing {

std::filesystem::path data_path(const std::string& name);
std::filesystem::path model_path(const std::string& name);

// Log-likelihood by direct recursive evaluation of every ground formula. Leaf
// values are looked up by name through the graph's leaf table only. With
// `all_unknowns` every unknown in-scope atom contributes a term; otherwise only
// those reachable from observed atoms do.
double oracle_log_likelihood(const Model& model, const DataSet& data, const LikelihoodGraph& g,
                             std::span<const double> leaf_values, bool all_unknowns = false,
                             const std::map<std::string, double>& fixed_parameters = {});

struct Instance {
  Model model;
  DataSet data;
};

// A random model mixing every formula constructor and combination function,
// with learnable parameters and numeric atoms, over a random 3-5 object domain
// with some unknown atoms.
Instance random_instance(std::mt19937_64& rng);

// Random formula over the declarations of `scope`, for print/parse round trips.
FormulaPtr random_formula(std::mt19937_64& rng, const Model& scope, int depth);

// Leaf values away from range boundaries and probability clamps.
std::vector<double> interior_values(const LikelihoodGraph& g, std::mt19937_64& rng);

// True when every likelihood term's probability lies in [margin, 1 - margin].
// Near-saturated terms lose the precision central differences need.
bool unsaturated(Evaluator& ev, double margin = 1e-6);

// Central finite difference of the log-likelihood in one leaf.
double finite_difference(Evaluator& ev, std::size_t leaf, double h);

// Network with the given undirected edges as a closed-world "link" relation.
DataSet small_network(int nodes, const std::vector<std::pair<int, int>>& edges);

}  // namespace rbn::testing
