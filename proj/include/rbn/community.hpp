#pragma once

// Latent-feature network models: soft community memberships u(V,C) feeding a
// logistic link model, plus the measures used to interpret them.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rbn/dataset.hpp"
#include "rbn/formula.hpp"
#include "rbn/learner.hpp"

namespace rbn {

enum class CommunityVariant { InnerProduct, Distance, MultiRelational };

std::string_view to_string(CommunityVariant v);
CommunityVariant community_variant_from_name(std::string_view name);  // throws ModelError

using Matrix = std::vector<std::vector<double>>;  // row-major

struct CommunitySpec {
  int communities = 2;
  std::vector<std::string> relations{"link"};
  CommunityVariant variant = CommunityVariant::InnerProduct;
  int distance_sign = -1;
  // u restricted to [0, inf); defaults to true except for the distance variant
  std::optional<bool> nonnegative_u;

  bool u_nonnegative() const {
    return nonnegative_u.value_or(variant != CommunityVariant::Distance);
  }
};

// Names used by generated models and augmented data.
inline constexpr const char* kNodeRelation = "node";
inline constexpr const char* kCommunityRelation = "community";
inline constexpr const char* kMembershipRelation = "u";
std::string alpha_name(const CommunitySpec& spec, std::size_t relation);
std::string association_name(const std::string& relation);  // t_i

// Model text for the spec. Throws ModelError for an invalid spec.
std::string community_model_text(const CommunitySpec& spec);
Model build_community_model(const CommunitySpec& spec);

// The data with `communities` latent objects appended and the node/community
// type relations that separate them from the network nodes.
DataSet with_community_domain(const DataSet& d, int communities);

// Relation names of all probabilistic relations in the data, in order.
std::vector<std::string> probabilistic_relations(const DataSet& d);

struct ErBaseline {
  std::map<std::string, double> alphas;
  double log_likelihood = 0.0;
};

// Closed-form independent-link model over ordered pairs of distinct nodes with
// known status, all samples pooled.
ErBaseline er_baseline(const DataSet& d, const std::vector<std::string>& relations);

struct CommunityResult {
  CommunitySpec spec;
  std::vector<std::string> nodes;
  Matrix u;                        // node x community
  Matrix t;                        // relation x community (multi-relational)
  std::map<std::string, double> alphas;
  double log_likelihood = 0.0;
  FitResult fit;
  double build_seconds = 0.0;
  std::size_t graph_nodes = 0;
  std::size_t observed_atoms = 0;
};

CommunityResult fit_community_model(const DataSet& d, const CommunitySpec& spec,
                                    const FitConfig& config);

// Log-likelihood gain of a single community: the relation-wise model
// S_i = alpha_i + u(V) u(W) t_i with u frozen, minus the ER baseline.
struct SignificanceReport {
  double baseline_log_likelihood = 0.0;
  std::vector<double> gains;        // per community
  std::vector<double> log_likelihoods;
};

double likelihood_gain(const DataSet& d, const std::vector<std::string>& relations,
                       const std::vector<double>& u_column, const FitConfig& config,
                       double baseline_log_likelihood);
SignificanceReport significance(const DataSet& d, const CommunityResult& r, const FitConfig& config);

// Re-learns only the intercepts on `d` with u and t held at the given values.
struct RefitResult {
  std::map<std::string, double> alphas;
  double log_likelihood = 0.0;
};
RefitResult refit_alphas(const DataSet& d, const CommunitySpec& spec, const Matrix& u,
                         const Matrix& t, const FitConfig& config);

// Pearson correlation of every column pair; columns with zero variance
// correlate 0 with everything.
Matrix column_correlations(const Matrix& reference, const Matrix& other);

// Maximum-weight perfect matching on a square matrix: result[i] = column
// assigned to row i.
std::vector<std::size_t> max_weight_assignment(const Matrix& weights);

struct CommunityMatch {
  std::vector<std::size_t> permutation;  // reference column i ~ other column permutation[i]
  Matrix correlations;                   // [reference][other]
  std::vector<double> matched;           // correlation of each matched pair
};
CommunityMatch match_communities(const Matrix& reference, const Matrix& other);

// 3 for r > 0.7, 2 for r > 0.5, 1 for r > 0.3, else 0.
int heat_level(double correlation);

struct SubsampleRun {
  double q = 100.0;
  std::size_t observed_atoms = 0;
  std::vector<double> restart_seconds;
  std::vector<int> restart_iterations;
  CommunityResult result;
  RefitResult refit;                 // intercepts re-learned on the full data
  CommunityMatch match;              // against the first q in the list
};

std::vector<SubsampleRun> subsample_experiment(const DataSet& d, const CommunitySpec& spec,
                                               const std::vector<double>& q_list,
                                               const FitConfig& config, std::uint64_t seed);

}  // namespace rbn
