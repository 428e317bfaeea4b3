#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "rbn/error.hpp"
#include "rbn/learner.hpp"
#include "rbn/model_parser.hpp"
#include "support.hpp"

using namespace rbn;
using namespace rbn::testing;

namespace {

FitConfig quick(int restarts = 4) {
  FitConfig c;
  c.restarts = restarts;
  c.max_iterations = 2000;
  c.threads = 2;
  return c;
}

// Exact P(indicator = 1) by enumerating every indicator assignment, with the
// remaining leaves held at `values`.
std::vector<double> exact_marginals(const LikelihoodGraph& g, std::vector<double> values,
                                    double* best_ll = nullptr) {
  const auto ind = g.leaves_of(LeafKind::Indicator);
  Evaluator ev(g);
  std::vector<double> lls;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << ind.size()); ++mask) {
    for (std::size_t j = 0; j < ind.size(); ++j) values[ind[j]] = (mask >> j) & 1 ? 1.0 : 0.0;
    ev.set_leaf_values(values);
    lls.push_back(ev.log_likelihood());
  }
  const double top = *std::max_element(lls.begin(), lls.end());
  if (best_ll) *best_ll = top;
  double z = 0.0;
  std::vector<double> m(ind.size(), 0.0);
  for (std::uint64_t mask = 0; mask < lls.size(); ++mask) {
    const double w = std::exp(lls[mask] - top);
    z += w;
    for (std::size_t j = 0; j < ind.size(); ++j)
      if ((mask >> j) & 1) m[j] += w;
  }
  for (double& x : m) x /= z;
  return m;
}

DataSet unary_data(int n, bool closed_world, const std::string& rel = "p") {
  std::vector<std::string> objs;
  for (int i = 0; i < n; ++i) objs.push_back("o" + std::to_string(i));
  return DataSet(objs, {{rel, 1, RelationKind::Probabilistic, {}, true, closed_world}});
}

}  // namespace

TEST_CASE("ER fit reaches the closed-form optimum") {
  DataSet d = load_dataset(data_path("zachary.edges"));
  Model m = load_model(model_path("er.rbn"));
  auto g = LikelihoodGraph::build(m, d);
  auto r = fit(g, quick());
  const double p = 156.0 / 1122.0;
  CHECK(r.log_likelihood == doctest::Approx(156 * std::log(p) + 966 * std::log(1 - p)).epsilon(1e-6));
  CHECK(r.leaf_values[0] == doctest::Approx(std::log(p / (1 - p))).epsilon(1e-3));
}

TEST_CASE("boundary optimum is reached through projection") {
  Model m = parse_model("param a [0, 1]; prob p/1; p(X) <- a;");
  DataSet d = unary_data(1, true);
  d.set_observation(0, "p", std::vector<int>{0}, Truth::True);
  auto r = fit(LikelihoodGraph::build(m, d), quick(2));
  CHECK(r.leaf_values[0] == 1.0);
  CHECK(r.log_likelihood == doctest::Approx(std::log(1 - kProbabilityClamp)));
}

TEST_CASE("fit rejects graphs without learnable leaves") {
  Model m = parse_model("prob p/1; p(X) <- 0.5;");
  DataSet d = unary_data(2, true);
  auto g = LikelihoodGraph::build(m, d);
  CHECK_THROWS_AS(fit(g, quick()), ModelError);
  auto c = quick();
  c.restarts = 0;
  Model m2 = parse_model("param a [0, 1]; prob p/1; p(X) <- a;");
  CHECK_THROWS_AS(fit(LikelihoodGraph::build(m2, d), c), ModelError);
}

TEST_CASE("fits are reproducible and independent of the thread count") {
  Model m = load_model(model_path("remission.rbn"));
  DataSet d = load_dataset(data_path("remission.json"));
  auto g = LikelihoodGraph::build(m, d);
  auto c = quick(6);
  c.max_iterations = 300;
  c.threads = 1;
  auto a = fit(g, c);
  c.threads = 4;
  auto b = fit(g, c);
  CHECK(a.leaf_values == b.leaf_values);
  CHECK(a.best_restart == b.best_restart);
  for (std::size_t r = 0; r < a.restarts.size(); ++r) CHECK(a.restarts[r].trace == b.restarts[r].trace);
  c.seed = 2;
  auto other = fit(g, c);
  CHECK(other.restarts[0].values != a.restarts[0].values);
}

TEST_CASE("property: accepted steps never lower the likelihood") {
  std::mt19937_64 rng(77);
  int fitted = 0;
  for (int i = 0; i < 40; ++i) {
    auto inst = random_instance(rng);
    auto g = LikelihoodGraph::build(inst.model, inst.data);
    if (g.leaves().size() == g.leaves_of(LeafKind::Indicator).size()) continue;
    auto c = quick(2);
    c.max_iterations = 200;
    c.em_rounds = 1;
    auto r = fit(g, c);
    ++fitted;
    for (const auto& rr : r.restarts) {
      for (std::size_t k = 1; k < rr.trace.size(); ++k) CHECK(rr.trace[k] >= rr.trace[k - 1]);
      for (std::size_t k = 0; k < g.leaves().size(); ++k) CHECK(g.leaves()[k].range.contains(rr.values[k]));
    }
    for (const auto& rr : r.restarts) CHECK(rr.log_likelihood <= r.log_likelihood);
  }
  CHECK(fitted > 20);
}

TEST_CASE("random initialization respects ranges") {
  Model m = parse_model("param a [2, 3]; param b; input x/1 numeric [0, inf] learnable; prob p/1;"
                        "p(X) <- COMBINE a * b * x(X) WITH l-reg;");
  DataSet d(std::vector<std::string>{"o"}, {{"x", 1, RelationKind::NumericInput, {0, kInfinity}, true, true},
                                            {"p", 1, RelationKind::Probabilistic, {}, true, true}});
  auto g = LikelihoodGraph::build(m, d);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    auto v = random_initialization(g, rng);
    CHECK(v[*g.find_parameter("a")] >= 2.0);
    CHECK(v[*g.find_parameter("a")] <= 3.0);
    CHECK(std::abs(v[*g.find_parameter("b")]) <= 1.0);
    const double x = v[*g.find_numeric("x", std::vector<int>{0})];
    CHECK(x >= 0.0);
    CHECK(x <= 1.0);
  }
}

TEST_CASE("MAP inference") {
  SUBCASE("zero indicators") {
    Model m = parse_model("param a [0, 1]; prob p/1; p(X) <- a;");
    DataSet d = unary_data(1, true);
    auto g = LikelihoodGraph::build(m, d);
    auto r = map_inference(g, std::vector<double>{0.4});
    CHECK(r.leaf_values == std::vector<double>{0.4});
    CHECK(r.log_likelihood == doctest::Approx(std::log(0.6)));
  }
  SUBCASE("independent atom") {
    Model m = parse_model("prob p/1; p(X) <- 0.9;");
    DataSet d = unary_data(1, false);
    BuildOptions keep;
    keep.keep_irrelevant_unknowns = true;
    auto g = LikelihoodGraph::build(m, d, keep);
    auto r = map_inference(g, std::vector<double>{0.0});
    CHECK(r.leaf_values[0] == 1.0);
    CHECK(r.exhaustive);
  }
  SUBCASE("chain of two atoms") {
    Model m = parse_model("prob p/1; prob q/1; p(X) <- 0.3; q(X) <- wif p(X) then 0.95 else 0.4;");
    DataSet d(std::vector<std::string>{"o"}, {{"p", 1, RelationKind::Probabilistic, {}, true, false},
                                              {"q", 1, RelationKind::Probabilistic, {}, true, false}});
    BuildOptions keep;
    keep.keep_irrelevant_unknowns = true;
    auto g = LikelihoodGraph::build(m, d, keep);
    REQUIRE(g.stats().indicators == 2);
    // joint: (p,q) = (0,0) .7*.6=.42, (0,1) .28, (1,0) .015, (1,1) .285
    auto r = map_inference(g, std::vector<double>(2, 0.0));
    CHECK(r.leaf_values[*g.find_indicator(0, "p", std::vector<int>{0})] == 0.0);
    CHECK(r.leaf_values[*g.find_indicator(0, "q", std::vector<int>{0})] == 0.0);
    CHECK(r.log_likelihood == doctest::Approx(std::log(0.42)));
  }
}

TEST_CASE("property: MAP agrees with brute force; ICM is a local optimum") {
  std::mt19937_64 rng(31);
  int tested = 0;
  for (int i = 0; i < 200 && tested < 40; ++i) {
    auto inst = random_instance(rng);
    BuildOptions keep;
    keep.keep_irrelevant_unknowns = true;
    auto g = LikelihoodGraph::build(inst.model, inst.data, keep);
    const auto ind = g.leaves_of(LeafKind::Indicator);
    if (ind.empty() || ind.size() > 12) continue;
    ++tested;
    auto v = interior_values(g, rng);
    double best = 0.0;
    exact_marginals(g, v, &best);
    auto r = map_inference(g, v);
    CHECK(r.log_likelihood == doctest::Approx(best).epsilon(1e-12));

    auto icm = map_inference(g, v, 0);
    CHECK_FALSE(icm.exhaustive);
    CHECK(icm.log_likelihood <= best + 1e-9);
    Evaluator ev(g);
    ev.set_leaf_values(icm.leaf_values);
    for (std::size_t k : ind) {
      ev.set_leaf_value(k, 1.0 - icm.leaf_values[k]);
      CHECK(ev.log_likelihood() <= icm.log_likelihood + 1e-12);
      ev.set_leaf_value(k, icm.leaf_values[k]);
    }
  }
  CHECK(tested >= 20);
}

TEST_CASE("Gibbs marginals") {
  SUBCASE("independent atom") {
    Model m = parse_model("prob p/1; p(X) <- 0.7;");
    DataSet d = unary_data(1, false);
    BuildOptions keep;
    keep.keep_irrelevant_unknowns = true;
    auto g = LikelihoodGraph::build(m, d, keep);
    auto r = gibbs_marginals(g, std::vector<double>{0.0}, 10000, 100, 5);
    CHECK(r.marginals[0] == doctest::Approx(0.7).epsilon(0.02 / 0.7));
  }
  SUBCASE("zero indicators give the exact likelihood") {
    Model m = parse_model("param a [0, 1]; prob p/1; p(X) <- a;");
    DataSet d = unary_data(1, true);
    auto g = LikelihoodGraph::build(m, d);
    auto r = gibbs_marginals(g, std::vector<double>{0.25}, 10, 0, 1);
    CHECK(r.indicators.empty());
    CHECK(r.expected_log_likelihood == doctest::Approx(std::log(0.75)));
  }
  SUBCASE("chain against enumeration, seeded") {
    Model m = parse_model("prob p/1; prob q/1; p(X) <- 0.3; q(X) <- wif p(X) then 0.95 else 0.4;");
    DataSet d(std::vector<std::string>{"o"}, {{"p", 1, RelationKind::Probabilistic, {}, true, false},
                                              {"q", 1, RelationKind::Probabilistic, {}, true, false}});
    BuildOptions keep;
    keep.keep_irrelevant_unknowns = true;
    auto g = LikelihoodGraph::build(m, d, keep);
    std::vector<double> v(2, 0.0);
    auto exact = exact_marginals(g, v);
    auto r = gibbs_marginals(g, v, 10000, 200, 9);
    for (std::size_t j = 0; j < exact.size(); ++j) CHECK(std::abs(r.marginals[j] - exact[j]) < 0.02);
    auto again = gibbs_marginals(g, v, 10000, 200, 9);
    CHECK(again.marginals == r.marginals);
  }
}

TEST_CASE("forward sampling") {
  SUBCASE("constant model frequency") {
    Model m = parse_model("prob p/1; p(X) <- 0.5;");
    DataSet d = unary_data(10, true);
    DataSet s = forward_sample(m, d, 2000, 3);
    CHECK(s.sample_count() == 2000);
    std::size_t hits = 0;
    for (std::size_t k = 0; k < s.sample_count(); ++k) hits += count_atoms(s, "p", Truth::True, k);
    const double n = 20000.0, sigma = std::sqrt(n * 0.25);
    CHECK(std::abs(static_cast<double>(hits) - n / 2) < 3 * sigma);
  }
  SUBCASE("water source station marginal") {
    Model m = load_model(model_path("water.rbn"));
    DataSet d = load_dataset(data_path("water.json"));
    SampleValues vals;
    vals.parameters = {{"alpha", -3.0}, {"beta", 2.0}};
    const std::size_t n = 10000;
    DataSet s = forward_sample(m, d, n, 17, vals);
    const int src = *d.find_object("S1");
    std::size_t hits = 0;
    for (std::size_t k = 0; k < n; ++k) hits += s.observation(k, "polluted", std::vector<int>{src}) == Truth::True;
    const double p = 0.6 / (1 + std::exp(3.0)) + 0.08;
    const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(n));
    CHECK(std::abs(static_cast<double>(hits) / static_cast<double>(n) - p) < 3 * sigma);
  }
  SUBCASE("errors and determinism") {
    Model m = parse_model("prob p/1; p(X) <- 0.5;");
    DataSet d = unary_data(5, true);
    CHECK_THROWS_AS(forward_sample(m, d, 0, 1), DataError);
    CHECK(to_native_json(forward_sample(m, d, 20, 4)) == to_native_json(forward_sample(m, d, 20, 4)));
    CHECK(to_native_json(forward_sample(m, d, 20, 4)) != to_native_json(forward_sample(m, d, 20, 5)));
  }
  SUBCASE("cyclic model") {
    Model m = parse_model("input e/2; prob p/1; p(X) <- COMBINE p(Y) WITH noisy-or FORALL Y WHERE e(X, Y);");
    DataSet d(std::vector<std::string>{"a", "b"}, {{"e", 2, RelationKind::BooleanInput, {}, false, true},
                                                   {"p", 1, RelationKind::Probabilistic, {}, true, false}});
    d.set_input("e", std::vector<int>{0, 1}, 1.0);
    CHECK_THROWS_AS(forward_sample(m, d, 3, 1), ModelError);
  }
}

TEST_CASE("fit with unknown atoms alternates with MAP") {
  Model m = parse_model("param a [0, 1]; prob p/1; prob q/1; p(X) <- a; q(X) <- wif p(X) then 0.9 else 0.1;");
  DataSet d(std::vector<std::string>{"o1", "o2", "o3"}, {{"p", 1, RelationKind::Probabilistic, {}, true, false},
                                                         {"q", 1, RelationKind::Probabilistic, {}, true, false}});
  for (int i = 0; i < 3; ++i) d.set_observation(0, "q", std::vector<int>{i}, Truth::True);
  auto g = LikelihoodGraph::build(m, d);
  auto r = fit(g, quick(3));
  // every p is imputed true and a is driven to 1
  for (std::size_t k : g.leaves_of(LeafKind::Indicator)) CHECK(r.leaf_values[k] == 1.0);
  CHECK(r.leaf_values[*g.find_parameter("a")] == doctest::Approx(1.0));
}

TEST_CASE("extract values feeds the sampler") {
  Model m = load_model(model_path("water_joint.rbn"));
  DataSet d = load_dataset(data_path("water.json"));
  BuildOptions keep;
  keep.keep_irrelevant_unknowns = true;
  auto g = LikelihoodGraph::build(m, d, keep);
  auto v = g.initial_values();
  v[*g.find_parameter("beta")] = 1.5;
  auto sv = extract_values(g, v);
  CHECK(sv.parameters.at("beta") == 1.5);
  CHECK(sv.numeric.size() == g.leaves_of(LeafKind::NumericAtom).size());
}
