#pragma once

// Shared grounding machinery: evaluation over a dataset, enumeration of the
// probabilistic ground atoms a model defines, and their dependency order.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rbn/dataset.hpp"
#include "rbn/formula.hpp"

namespace rbn {

// Resolves atoms of a model against a dataset. Boolean inputs missing from the
// data are false; probabilistic atoms read the current sample, and parameters
// and numeric inputs can be overridden.
class DataContext : public EvaluationContext {
 public:
  DataContext(const Model& model, const DataSet& data);

  std::size_t domain_size() const override { return data_->object_count(); }
  double parameter_value(const std::string& name) const override;
  double atom_value(const std::string& relation, std::span<const int> args) const override;

  void set_parameter(const std::string& name, double value) { parameters_[name] = value; }
  void set_numeric(const std::string& relation, std::span<const int> args, double value);
  void set_sample(std::size_t sample) { sample_ = sample; }

  const Model& model() const { return *model_; }
  const DataSet& data() const { return *data_; }

 protected:
  // Value of a probabilistic atom; default reads the current sample and
  // rejects unknown atoms.
  virtual double probabilistic_value(const RelationDecl& r, std::span<const int> args) const;

  const RelationDecl& decl(const std::string& relation) const;

  std::size_t sample_ = 0;

 private:
  const Model* model_;
  const DataSet* data_;
  std::map<std::string, double> parameters_;
  std::unordered_map<std::string, std::unordered_map<std::uint64_t, double>> numeric_;
};

// The probabilistic ground atoms within model scope (passing their head guard)
// and the ground dependency relation between them.
class GroundModel {
 public:
  struct Atom {
    std::uint32_t relation;  // index into model.relations()
    std::vector<int> args;
  };

  GroundModel(const Model& model, const DataSet& data);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::optional<std::uint32_t> find(std::uint32_t relation, std::span<const int> args) const;
  GroundAtom ground_atom(std::uint32_t atom) const;

  // Atoms referenced by each atom's ground formula (empty when the model has
  // no probabilistic atoms in formula bodies).
  const std::vector<std::vector<std::uint32_t>>& parents() const { return parents_; }

  // Parents before children. Throws ModelError on a cyclic ground dependency.
  std::vector<std::uint32_t> topological_order() const;

 private:
  const Model* model_;
  std::vector<Atom> atoms_;
  std::unordered_map<std::uint64_t, std::uint32_t> index_;  // (relation, args) packed
  std::vector<std::vector<std::uint32_t>> parents_;
};

// Every probabilistic atom reachable in the ground formula `f` under `binding`.
void collect_probabilistic_references(const Formula& f, const Model& model, Binding& binding,
                                      const EvaluationContext& ctx,
                                      std::vector<GroundAtom>& out);

}  // namespace rbn
