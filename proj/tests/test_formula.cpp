#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "rbn/error.hpp"
#include "rbn/formula.hpp"
#include "rbn/model_parser.hpp"

using namespace rbn;

namespace {

// Map-backed context over a small domain.
class MapContext : public EvaluationContext {
 public:
  explicit MapContext(std::size_t n) : n_(n) {}
  std::size_t domain_size() const override { return n_; }
  double parameter_value(const std::string& name) const override { return params.at(name); }
  double atom_value(const std::string& rel, std::span<const int> args) const override {
    auto it = atoms.find({rel, std::vector<int>(args.begin(), args.end())});
    return it == atoms.end() ? 0.0 : it->second;
  }
  std::map<std::string, double> params;
  std::map<std::pair<std::string, std::vector<int>>, double> atoms;

 private:
  std::size_t n_;
};

double eval(const FormulaPtr& f, const MapContext& ctx, std::vector<std::string> vars = {},
            std::vector<int> objs = {}) {
  Binding b(vars, objs);
  return evaluate(*f, b, ctx);
}

}  // namespace

TEST_CASE("wif is a convex combination") {
  MapContext ctx(1);
  auto f = make_wif(make_constant(0.3), make_constant(1.0), make_constant(0.1));
  CHECK(eval(f, ctx) == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("l-reg over an empty multiset is one half") {
  MapContext ctx(3);
  auto f = make_combine({make_atom("intensity", {"R"})}, CombinationFunction::LogisticRegression, {"R"},
                        {{GuardAtom::Kind::Relation, false, "exposed", {"A", "R"}}});
  CHECK(eval(f, ctx, {"A"}, {0}) == 0.5);

  ctx.atoms[{"exposed", {0, 1}}] = 1;
  ctx.atoms[{"exposed", {0, 2}}] = 1;
  ctx.atoms[{"intensity", {1}}] = 1.0;
  ctx.atoms[{"intensity", {2}}] = 2.0;
  const double e3 = std::exp(3.0);
  CHECK(eval(f, ctx, {"A"}, {0}) == doctest::Approx(e3 / (1 + e3)).epsilon(1e-14));
}

TEST_CASE("combination functions") {
  std::vector<double> v{0.2, 0.5, 0.9};
  CHECK(combine_values(CombinationFunction::Sum, v) == doctest::Approx(1.6));
  CHECK(combine_values(CombinationFunction::Mean, v) == doctest::Approx(1.6 / 3));
  CHECK(combine_values(CombinationFunction::NoisyOr, v) == doctest::Approx(1 - 0.8 * 0.5 * 0.1));
  CHECK(combine_values(CombinationFunction::LogisticRegression, v) == doctest::Approx(1 / (1 + std::exp(-1.6))));
  CHECK(combine_values(CombinationFunction::NoisyOr, std::vector<double>{}) == 0.0);
  CHECK(combine_values(CombinationFunction::Sum, std::vector<double>{}) == 0.0);
  CHECK_THROWS_AS(combine_values(CombinationFunction::Mean, std::vector<double>{}), EvaluationError);
  CHECK_THROWS_AS(combine_values(CombinationFunction::NoisyOr, std::vector<double>{1.5}), EvaluationError);
}

TEST_CASE("logistic is stable at extremes") {
  CHECK(logistic(0) == 0.5);
  CHECK(logistic(800) == 1.0);
  CHECK(logistic(-800) >= 0.0);
  CHECK(std::isfinite(logistic(-800)));
  CHECK(logistic(-2) == doctest::Approx(1 - logistic(2)).epsilon(1e-15));
}

TEST_CASE("top-level probability must lie in [0,1]") {
  MapContext ctx(1);
  Binding b;
  CHECK_THROWS_AS(evaluate_probability(*make_constant(1.2), b, ctx), EvaluationError);
  CHECK(evaluate_probability(*make_constant(1.0), b, ctx) == 1.0);
  // plain evaluation allows any real
  CHECK(evaluate(*make_constant(1.2), b, ctx) == 1.2);
}

TEST_CASE("arithmetic and parameters") {
  MapContext ctx(2);
  ctx.params["a"] = 2.0;
  ctx.atoms[{"x", {1}}] = 0.25;
  auto f = make_binary(BinaryOp::Minus, make_binary(BinaryOp::Times, make_param("a"), make_atom("x", {"V"})),
                       make_constant(0.1));
  CHECK(eval(f, ctx, {"V"}, {1}) == doctest::Approx(0.4));
}

TEST_CASE("unbound variables are reported") {
  MapContext ctx(2);
  CHECK_THROWS_AS(eval(make_atom("x", {"V"}), ctx), EvaluationError);
}

TEST_CASE("free variables respect binding") {
  CHECK(free_variables(*make_atom("polluted", {"V"})) == std::set<std::string>{"V"});
  auto c = make_combine({make_atom("upstream", {"V", "S"})}, CombinationFunction::Sum, {"V"});
  CHECK(free_variables(*c) == std::set<std::string>{"S"});
  CHECK(free_variables(*make_constant(0.5)).empty());
  auto guarded = make_combine({make_constant(1.0)}, CombinationFunction::Sum, {"V"},
                              {{GuardAtom::Kind::Relation, false, "e", {"V", "W"}}});
  CHECK(free_variables(*guarded) == std::set<std::string>{"W"});
}

TEST_CASE("guards with equality and negation") {
  MapContext ctx(3);
  ctx.atoms[{"e", {0, 1}}] = 1;
  auto count = [&](Guard g) {
    auto f = make_combine({make_constant(1.0)}, CombinationFunction::Sum, {"W"}, std::move(g));
    return eval(f, ctx, {"V"}, {0});
  };
  CHECK(count({}) == 3);
  CHECK(count({{GuardAtom::Kind::NotEqual, false, "", {"V", "W"}}}) == 2);
  CHECK(count({{GuardAtom::Kind::Equal, false, "", {"V", "W"}}}) == 1);
  CHECK(count({{GuardAtom::Kind::Relation, false, "e", {"V", "W"}}}) == 1);
  CHECK(count({{GuardAtom::Kind::Relation, true, "e", {"V", "W"}}}) == 2);
}

TEST_CASE("model validation") {
  std::vector<RelationDecl> rel{{"p", 1, RelationKind::Probabilistic, {}, false}};
  SUBCASE("undeclared relation") {
    CHECK_THROWS_AS(Model::create(rel, {}, {{"p", {"X"}, {}, make_atom("q", {"X"})}}), ModelError);
  }
  SUBCASE("arity mismatch") {
    CHECK_THROWS_AS(Model::create(rel, {}, {{"p", {"X"}, {}, make_atom("p", {"X", "X"})}}), ModelError);
  }
  SUBCASE("duplicate assignment") {
    auto a = Assignment{"p", {"X"}, {}, make_constant(0.5)};
    CHECK_THROWS_AS(Model::create(rel, {}, {a, a}), ModelError);
  }
  SUBCASE("free variable not in head") {
    CHECK_THROWS_AS(Model::create({{"p", 1, RelationKind::Probabilistic, {}, false},
                                   {"x", 1, RelationKind::NumericInput, {}, false}},
                                  {}, {{"p", {"X"}, {}, make_atom("x", {"Y"})}}),
                    ModelError);
  }
  SUBCASE("missing assignment") { CHECK_THROWS_AS(Model::create(rel, {}, {}), ModelError); }
}

TEST_CASE("number formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-17, 12345678.9, 0.6})
    CHECK(std::stod(format_number(x)) == x);
}
