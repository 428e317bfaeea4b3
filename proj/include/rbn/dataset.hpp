#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rbn/formula.hpp"

namespace rbn {

enum class Truth : std::int8_t { False = 0, True = 1, Unknown = 2 };

struct GroundAtom {
  std::string relation;
  std::vector<int> args;

  bool operator==(const GroundAtom&) const = default;
};

std::string to_string(const GroundAtom& atom, std::span<const std::string> labels = {});

struct RelationSchema {
  std::string name;
  int arity = 0;
  RelationKind kind = RelationKind::BooleanInput;
  Interval range;            // numeric inputs
  bool directed = true;      // false: stored as symmetric closure (arity 2 only)
  bool closed_world = true;  // unlisted atoms are false; otherwise unknown (probabilistic only)
};

// Objects, input valuations and observation samples. Ground atoms are keyed
// by packing up to kMaxArity object ids into 16-bit lanes.
class DataSet {
 public:
  static constexpr int kMaxArity = 4;
  static constexpr int kMaxObjects = 1 << 16;

  DataSet(std::vector<std::string> objects, std::vector<RelationSchema> relations);

  std::size_t object_count() const { return objects_.size(); }
  const std::vector<std::string>& labels() const { return objects_; }
  const std::string& label(int id) const { return objects_.at(static_cast<std::size_t>(id)); }
  std::optional<int> find_object(std::string_view label) const;

  const std::vector<RelationSchema>& relations() const { return relations_; }
  const RelationSchema* find_relation(std::string_view name) const;
  const RelationSchema& relation(std::string_view name) const;  // throws DataError

  // Input relations. Boolean values are 0/1. Undirected relations get both orders.
  void set_input(std::string_view relation, std::span<const int> args, double value);
  // Stored value, closed-world 0 for Boolean inputs, nullopt for missing numeric values.
  std::optional<double> input_value(std::string_view relation, std::span<const int> args) const;

  std::size_t sample_count() const { return samples_.size(); }
  std::size_t add_sample();
  // `mirror` = false writes a single ordered atom even for undirected relations.
  void set_observation(std::size_t sample, std::string_view relation, std::span<const int> args,
                       Truth value, bool mirror = true);
  Truth observation(std::size_t sample, std::string_view relation,
                    std::span<const int> args) const;

  // Stored value or closed-world default; nullopt = unknown. Probabilistic
  // relations yield 0/1.
  std::optional<double> get_value(const GroundAtom& atom, std::size_t sample = 0) const;

  // Explicitly stored entries, for serialization and subsampling.
  struct Entry {
    std::vector<int> args;
    double value;
  };
  std::vector<Entry> stored_inputs(std::string_view relation) const;
  std::vector<std::pair<std::vector<int>, Truth>> stored_observations(
      std::size_t sample, std::string_view relation) const;

  // Adds a relation after construction (e.g. type relations for latent domains).
  void add_relation(RelationSchema schema);

  static std::uint64_t key(std::span<const int> args);
  static std::vector<int> unpack(std::uint64_t key, int arity);

 private:
  std::size_t relation_index(std::string_view name) const;
  void check_args(const RelationSchema& r, std::span<const int> args) const;

  std::vector<std::string> objects_;
  std::unordered_map<std::string, int> object_index_;
  std::vector<RelationSchema> relations_;
  std::vector<std::unordered_map<std::uint64_t, double>> inputs_;  // per relation
  std::vector<std::vector<std::unordered_map<std::uint64_t, Truth>>> samples_;  // [sample][relation]
};

enum class DataFormat { Auto, NativeJson, EdgeList };

DataSet load_dataset(const std::filesystem::path& path, DataFormat format = DataFormat::Auto);
DataSet parse_native_json(std::string_view text);
DataSet parse_edge_list(std::string_view text);
std::string to_native_json(const DataSet& d);
void save_dataset(const DataSet& d, const std::filesystem::path& path);

// Keeps all true atoms and, per listed relation and sample, a uniform random
// ceil(q% * n) subset of its false atoms over argument tuples without repeated
// objects; the rest become unknown. 0 < q <= 100.
DataSet subsample_false_links(const DataSet& d, std::span<const std::string> relations, double q,
                              std::uint64_t seed);

// Number of atoms with the given truth value over tuples of pairwise distinct objects.
std::size_t count_atoms(const DataSet& d, std::string_view relation, Truth value,
                        std::size_t sample = 0);

}  // namespace rbn
