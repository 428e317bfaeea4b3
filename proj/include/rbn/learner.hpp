#pragma once

// Maximum-likelihood fitting over a likelihood graph, inference for unknown
// atoms, and forward sampling.

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rbn/dataset.hpp"
#include "rbn/formula.hpp"
#include "rbn/likelihood_graph.hpp"

namespace rbn {

struct FitConfig {
  int restarts = 20;
  int max_iterations = 5000;
  double tolerance = 1e-7;  // relative log-likelihood gain
  int patience = 3;         // consecutive accepted steps below tolerance
  double initial_step = 0.01;
  bool per_term_step = true;  // step on the gradient of log L / number of terms
  double grow = 1.2;
  double shrink = 0.5;
  std::uint64_t seed = 1;
  unsigned threads = 0;     // 0: hardware concurrency
  int em_rounds = 10;       // gradient/MAP alternations when unknown atoms are present
  bool record_trace = true;
};

struct RestartResult {
  double log_likelihood = 0.0;
  int iterations = 0;
  double seconds = 0.0;
  bool converged = false;
  std::vector<double> trace;   // log-likelihood after each accepted step
  std::vector<double> values;  // final leaf values
};

struct FitResult {
  std::vector<double> leaf_values;  // of the best restart
  double log_likelihood = 0.0;
  std::size_t best_restart = 0;
  std::vector<RestartResult> restarts;
};

// Random starting point: bounded leaves uniform over their range, [0, inf)
// leaves uniform on [0,1], unbounded leaves uniform on [-1,1], indicators fair
// coins.
std::vector<double> random_initialization(const LikelihoodGraph& g, std::mt19937_64& rng);

// Projected gradient ascent over parameter and numeric leaves from the
// evaluator's current valuation. Indicators stay fixed.
RestartResult ascend(Evaluator& ev, const FitConfig& config);

// Independent restarts, run concurrently. Results do not depend on the number
// of threads.
FitResult fit(const LikelihoodGraph& g, const FitConfig& config);

struct MapResult {
  std::vector<double> leaf_values;
  double log_likelihood = 0.0;
  bool exhaustive = false;
};

// Most probable indicator values given the other leaves: exhaustive for at
// most `exhaustive_limit` indicators, otherwise iterated conditional modes
// starting from the given valuation.
MapResult map_inference(const LikelihoodGraph& g, std::span<const double> values,
                        std::size_t exhaustive_limit = 12);

struct GibbsResult {
  std::vector<std::size_t> indicators;  // leaf indices
  std::vector<double> marginals;        // P(atom true), parallel to `indicators`
  double expected_log_likelihood = 0.0;
};

// Single-site Gibbs sampling of the indicators with the other leaves fixed.
GibbsResult gibbs_marginals(const LikelihoodGraph& g, std::span<const double> values,
                            std::size_t sweeps, std::size_t burn_in, std::uint64_t seed);

// Ancestral sampling of every probabilistic relation of the model. Returns a
// copy of the input data holding `count` closed-world samples. Parameters and
// learnable numeric atoms take the given values, falling back to the data.
struct SampleValues {
  std::map<std::string, double> parameters;
  std::vector<std::pair<GroundAtom, double>> numeric;
};
DataSet forward_sample(const Model& model, const DataSet& data, std::size_t count,
                       std::uint64_t seed, const SampleValues& values = {});

// Parameter values and numeric atoms of a fitted valuation, for sampling or
// reporting.
SampleValues extract_values(const LikelihoodGraph& g, std::span<const double> leaf_values);

}  // namespace rbn
