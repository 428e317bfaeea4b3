#include "rbn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rbn/error.hpp"

namespace rbn {

using nlohmann::json;

std::string to_string(const GroundAtom& atom, std::span<const std::string> labels) {
  std::string out = atom.relation + "(";
  for (std::size_t i = 0; i < atom.args.size(); ++i) {
    if (i) out += ",";
    const int a = atom.args[i];
    out += (a >= 0 && static_cast<std::size_t>(a) < labels.size()) ? labels[a] : std::to_string(a);
  }
  return out + ")";
}

DataSet::DataSet(std::vector<std::string> objects, std::vector<RelationSchema> relations)
    : objects_(std::move(objects)) {
  if (objects_.empty()) throw DataError("dataset has no objects");
  if (objects_.size() >= static_cast<std::size_t>(kMaxObjects))
    throw DataError("too many objects (limit 65535)");
  for (std::size_t i = 0; i < objects_.size(); ++i)
    if (!object_index_.emplace(objects_[i], static_cast<int>(i)).second)
      throw DataError("duplicate object label '" + objects_[i] + "'");
  samples_.emplace_back();
  for (auto& r : relations) add_relation(std::move(r));
}

void DataSet::add_relation(RelationSchema schema) {
  if (find_relation(schema.name)) throw DataError("duplicate relation '" + schema.name + "'");
  if (schema.arity < 0 || schema.arity > kMaxArity)
    throw DataError("relation '" + schema.name + "' has unsupported arity");
  if (!schema.directed && schema.arity != 2)
    throw DataError("undirected relation '" + schema.name + "' must be binary");
  if (schema.range.lo > schema.range.hi) throw DataError("empty range for '" + schema.name + "'");
  relations_.push_back(std::move(schema));
  inputs_.emplace_back();
  for (auto& s : samples_) s.emplace_back();
}

std::optional<int> DataSet::find_object(std::string_view label) const {
  auto it = object_index_.find(std::string(label));
  if (it == object_index_.end()) return std::nullopt;
  return it->second;
}

const RelationSchema* DataSet::find_relation(std::string_view name) const {
  for (const auto& r : relations_)
    if (r.name == name) return &r;
  return nullptr;
}

const RelationSchema& DataSet::relation(std::string_view name) const {
  if (const auto* r = find_relation(name)) return *r;
  throw DataError("unknown relation '" + std::string(name) + "'");
}

std::size_t DataSet::relation_index(std::string_view name) const {
  for (std::size_t i = 0; i < relations_.size(); ++i)
    if (relations_[i].name == name) return i;
  throw DataError("unknown relation '" + std::string(name) + "'");
}

std::uint64_t DataSet::key(std::span<const int> args) {
  std::uint64_t k = 0;
  for (std::size_t i = 0; i < args.size(); ++i)
    k |= static_cast<std::uint64_t>(static_cast<std::uint16_t>(args[i])) << (16 * i);
  return k;
}

std::vector<int> DataSet::unpack(std::uint64_t key, int arity) {
  std::vector<int> out(static_cast<std::size_t>(arity));
  for (int i = 0; i < arity; ++i) out[i] = static_cast<int>((key >> (16 * i)) & 0xffff);
  return out;
}

void DataSet::check_args(const RelationSchema& r, std::span<const int> args) const {
  if (static_cast<int>(args.size()) != r.arity)
    throw DataError("arity mismatch for '" + r.name + "': expected " + std::to_string(r.arity) +
                    ", got " + std::to_string(args.size()));
  for (int a : args)
    if (a < 0 || static_cast<std::size_t>(a) >= objects_.size())
      throw DataError("object id " + std::to_string(a) + " out of range in '" + r.name + "'");
}

void DataSet::set_input(std::string_view relation, std::span<const int> args, double value) {
  const std::size_t ri = relation_index(relation);
  const RelationSchema& r = relations_[ri];
  check_args(r, args);
  if (r.kind == RelationKind::Probabilistic)
    throw DataError("'" + r.name + "' is probabilistic; use observations");
  if (r.kind == RelationKind::BooleanInput) {
    if (value != 0.0 && value != 1.0) throw DataError("Boolean value expected for '" + r.name + "'");
  } else if (!std::isfinite(value) || !r.range.contains(value)) {
    throw DataError("value " + format_number(value) + " outside the range of '" + r.name + "'");
  }
  inputs_[ri][key(args)] = value;
  if (!r.directed) {
    const int rev[2] = {args[1], args[0]};
    inputs_[ri][key(rev)] = value;
  }
}

std::optional<double> DataSet::input_value(std::string_view relation,
                                           std::span<const int> args) const {
  const std::size_t ri = relation_index(relation);
  const auto& table = inputs_[ri];
  auto it = table.find(key(args));
  if (it != table.end()) return it->second;
  if (relations_[ri].kind == RelationKind::BooleanInput && relations_[ri].closed_world) return 0.0;
  return std::nullopt;
}

std::size_t DataSet::add_sample() {
  samples_.emplace_back(relations_.size());
  return samples_.size() - 1;
}

void DataSet::set_observation(std::size_t sample, std::string_view relation,
                              std::span<const int> args, Truth value, bool mirror) {
  const std::size_t ri = relation_index(relation);
  const RelationSchema& r = relations_[ri];
  check_args(r, args);
  if (r.kind != RelationKind::Probabilistic)
    throw DataError("observations only apply to probabilistic relations ('" + r.name + "')");
  auto& table = samples_.at(sample)[ri];
  table[key(args)] = value;
  if (!r.directed && mirror) {
    const int rev[2] = {args[1], args[0]};
    table[key(rev)] = value;
  }
}

Truth DataSet::observation(std::size_t sample, std::string_view relation,
                           std::span<const int> args) const {
  const std::size_t ri = relation_index(relation);
  const auto& table = samples_.at(sample)[ri];
  auto it = table.find(key(args));
  if (it != table.end()) return it->second;
  return relations_[ri].closed_world ? Truth::False : Truth::Unknown;
}

std::optional<double> DataSet::get_value(const GroundAtom& atom, std::size_t sample) const {
  const RelationSchema& r = relation(atom.relation);
  check_args(r, atom.args);
  if (r.kind != RelationKind::Probabilistic) return input_value(atom.relation, atom.args);
  switch (observation(sample, atom.relation, atom.args)) {
    case Truth::True: return 1.0;
    case Truth::False: return 0.0;
    case Truth::Unknown: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<DataSet::Entry> DataSet::stored_inputs(std::string_view relation) const {
  const std::size_t ri = relation_index(relation);
  std::vector<Entry> out;
  for (const auto& [k, v] : inputs_[ri]) out.push_back({unpack(k, relations_[ri].arity), v});
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.args < b.args; });
  return out;
}

std::vector<std::pair<std::vector<int>, Truth>> DataSet::stored_observations(
    std::size_t sample, std::string_view relation) const {
  const std::size_t ri = relation_index(relation);
  std::vector<std::pair<std::vector<int>, Truth>> out;
  for (const auto& [k, v] : samples_.at(sample)[ri])
    out.emplace_back(unpack(k, relations_[ri].arity), v);
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// native JSON

namespace {

RelationKind parse_kind(const std::string& s) {
  if (s == "boolean-input") return RelationKind::BooleanInput;
  if (s == "numeric-input") return RelationKind::NumericInput;
  if (s == "probabilistic") return RelationKind::Probabilistic;
  throw DataError("unknown relation kind '" + s + "'");
}

double parse_json_bound(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
  }
  if (j.is_null()) return kInfinity;
  throw DataError("malformed range bound " + j.dump());
}

json bound_to_json(double x) {
  if (x == kInfinity) return "inf";
  if (x == -kInfinity) return "-inf";
  return x;
}

std::vector<int> resolve_args(const DataSet& d, const json& args, const std::string& rel) {
  std::vector<int> out;
  for (const auto& a : args) {
    const std::string label = a.is_string() ? a.get<std::string>() : a.dump();
    auto id = d.find_object(label);
    if (!id) throw DataError("dangling object reference '" + label + "' in '" + rel + "'");
    out.push_back(*id);
  }
  return out;
}

}  // namespace

DataSet parse_native_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset JSON: ") + e.what());
  }
  try {
    std::vector<std::string> objects;
    for (const auto& o : j.at("objects"))
      objects.push_back(o.is_string() ? o.get<std::string>() : o.dump());
    std::vector<RelationSchema> relations;
    for (const auto& r : j.value("relations", json::array())) {
      RelationSchema s;
      s.name = r.at("name").get<std::string>();
      s.arity = r.at("arity").get<int>();
      s.kind = parse_kind(r.at("kind").get<std::string>());
      if (r.contains("range")) {
        const auto& range = r.at("range");
        if (!range.is_array() || range.size() != 2) throw DataError("range must be [lo, hi]");
        s.range = {parse_json_bound(range[0]), parse_json_bound(range[1])};
      }
      s.directed = r.value("directed", true);
      s.closed_world = r.value("closed_world", s.kind != RelationKind::Probabilistic);
      relations.push_back(std::move(s));
    }
    DataSet d(std::move(objects), std::move(relations));
    for (const auto& e : j.value("input", json::array())) {
      const auto rel = e.at("rel").get<std::string>();
      const auto args = resolve_args(d, e.at("args"), rel);
      const auto& v = e.at("value");
      d.set_input(rel, args, v.is_boolean() ? (v.get<bool>() ? 1.0 : 0.0) : v.get<double>());
    }
    const auto samples = j.value("samples", json::array({json::array()}));
    if (samples.empty()) throw DataError("dataset needs at least one sample");
    for (std::size_t s = 0; s < samples.size(); ++s) {
      if (s > 0) d.add_sample();
      // explicit atoms win over mirrored ones, so asymmetric undirected data survives a round trip
      std::vector<std::pair<std::string, std::vector<int>>> written;
      std::set<std::pair<std::string, std::uint64_t>> explicit_atoms;
      for (const auto& e : samples[s]) {
        const auto rel = e.at("rel").get<std::string>();
        const auto args = resolve_args(d, e.at("args"), rel);
        const auto& v = e.at("value");
        Truth t;
        if (v.is_boolean()) {
          t = v.get<bool>() ? Truth::True : Truth::False;
        } else if (v.is_string() && v.get<std::string>() == "unknown") {
          t = Truth::Unknown;
        } else {
          throw DataError("observation value must be true, false or \"unknown\"");
        }
        d.set_observation(s, rel, args, t, /*mirror=*/false);
        explicit_atoms.emplace(rel, DataSet::key(args));
        written.emplace_back(rel, args);
      }
      for (const auto& [rel, args] : written) {
        if (d.relation(rel).directed) continue;
        const std::vector<int> rev = {args[1], args[0]};
        if (explicit_atoms.count({rel, DataSet::key(rev)})) continue;
        d.set_observation(s, rel, rev, d.observation(s, rel, args), /*mirror=*/false);
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed dataset: ") + e.what());
  }
}

std::string to_native_json(const DataSet& d) {
  json j;
  j["objects"] = d.labels();
  j["relations"] = json::array();
  j["input"] = json::array();
  for (const auto& r : d.relations()) {
    json rj = {{"name", r.name},
               {"arity", r.arity},
               {"kind", std::string(to_string(r.kind))},
               {"directed", r.directed},
               {"closed_world", r.closed_world}};
    if (r.kind == RelationKind::NumericInput)
      rj["range"] = {bound_to_json(r.range.lo), bound_to_json(r.range.hi)};
    j["relations"].push_back(rj);
    if (r.kind == RelationKind::Probabilistic) continue;
    for (const auto& e : d.stored_inputs(r.name)) {
      if (!r.directed && e.args[0] > e.args[1]) continue;
      json args = json::array();
      for (int a : e.args) args.push_back(d.label(a));
      json value = r.kind == RelationKind::BooleanInput ? json(e.value != 0.0) : json(e.value);
      j["input"].push_back({{"rel", r.name}, {"args", args}, {"value", value}});
    }
  }
  j["samples"] = json::array();
  for (std::size_t s = 0; s < d.sample_count(); ++s) {
    json sample = json::array();
    for (const auto& r : d.relations()) {
      if (r.kind != RelationKind::Probabilistic) continue;
      for (const auto& [args, t] : d.stored_observations(s, r.name)) {
        // undirected: the lower-ordered atom implies its mirror unless they differ
        if (!r.directed && args[0] > args[1]) {
          const int rev[2] = {args[1], args[0]};
          if (d.observation(s, r.name, rev) == t) continue;
        }
        json a = json::array();
        for (int x : args) a.push_back(d.label(x));
        json value = t == Truth::Unknown ? json("unknown") : json(t == Truth::True);
        sample.push_back({{"rel", r.name}, {"args", a}, {"value", value}});
      }
    }
    j["samples"].push_back(sample);
  }
  return j.dump(1);
}

// ---------------------------------------------------------------------------
// edge list

DataSet parse_edge_list(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string header;
  if (!std::getline(in, header)) throw DataError("edge list: missing header");
  std::istringstream hs(header);
  std::string tok;
  int nodes = -1, k = -1;
  std::vector<bool> directed;
  std::vector<std::string> names;
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string p;
    while (std::getline(ss, p, ',')) parts.push_back(p);
    return parts;
  };
  while (hs >> tok) {
    if (tok == "#nodes") {
      hs >> nodes;
    } else if (tok == "#relations") {
      hs >> k;
    } else if (tok.rfind("directed:", 0) == 0) {
      for (const auto& p : split(tok.substr(9))) directed.push_back(p == "1");
    } else if (tok.rfind("names:", 0) == 0) {
      names = split(tok.substr(6));
    } else {
      throw DataError("edge list: unexpected header token '" + tok + "'");
    }
  }
  if (nodes <= 0) throw DataError("edge list: header needs #nodes N with N > 0");
  if (k <= 0) throw DataError("edge list: header needs #relations K with K > 0");
  if (directed.empty()) directed.assign(static_cast<std::size_t>(k), false);
  if (static_cast<int>(directed.size()) != k)
    throw DataError("edge list: directed flags do not match #relations");
  if (names.empty()) {
    if (k == 1) {
      names = {"link"};
    } else {
      for (int i = 1; i <= k; ++i) names.push_back("link" + std::to_string(i));
    }
  }
  if (static_cast<int>(names.size()) != k) throw DataError("edge list: names do not match #relations");

  std::vector<std::string> labels;
  for (int i = 1; i <= nodes; ++i) labels.push_back(std::to_string(i));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("# labels:", 0) == 0) {
      std::istringstream ls(line.substr(9));
      std::vector<std::string> custom;
      while (ls >> tok) custom.push_back(tok);
      if (static_cast<int>(custom.size()) != nodes)
        throw DataError("edge list: label count does not match #nodes");
      labels = custom;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    lines.push_back(line);
  }

  std::vector<RelationSchema> schemas;
  for (int i = 0; i < k; ++i) {
    RelationSchema s;
    s.name = names[i];
    s.arity = 2;
    s.kind = RelationKind::Probabilistic;
    s.directed = directed[i];
    s.closed_world = true;
    schemas.push_back(s);
  }
  DataSet d(labels, schemas);
  for (const auto& l : lines) {
    std::istringstream ls(l);
    std::string rel;
    int src = 0, dst = 0;
    if (!(ls >> rel >> src >> dst)) throw DataError("edge list: malformed line '" + l + "'");
    // a numeric relation column indexes the relations 1..K
    if (!d.find_relation(rel)) {
      int idx = 0;
      try {
        idx = std::stoi(rel);
      } catch (...) {
        throw DataError("edge list: unknown relation '" + rel + "'");
      }
      if (idx < 1 || idx > k) throw DataError("edge list: relation index out of range in '" + l + "'");
      rel = names[idx - 1];
    }
    if (src < 1 || src > nodes || dst < 1 || dst > nodes)
      throw DataError("edge list: dangling node reference in '" + l + "'");
    const int args[2] = {src - 1, dst - 1};
    d.set_observation(0, rel, args, Truth::True);
  }
  return d;
}

DataSet load_dataset(const std::filesystem::path& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open data file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  if (format == DataFormat::Auto)
    format = path.extension() == ".json" ? DataFormat::NativeJson : DataFormat::EdgeList;
  return format == DataFormat::NativeJson ? parse_native_json(ss.str())
                                          : parse_edge_list(ss.str());
}

void save_dataset(const DataSet& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_native_json(d) << "\n";
}

// ---------------------------------------------------------------------------

namespace {

template <class Fn>
void for_each_distinct_tuple(std::size_t n, int arity, Fn&& fn) {
  std::vector<int> t(static_cast<std::size_t>(arity), 0);
  if (arity == 0) {
    fn(t);
    return;
  }
  while (true) {
    bool distinct = true;
    for (int i = 0; i < arity && distinct; ++i)
      for (int j = i + 1; j < arity; ++j)
        if (t[i] == t[j]) {
          distinct = false;
          break;
        }
    if (distinct) fn(t);
    int i = arity - 1;
    while (i >= 0 && ++t[i] == static_cast<int>(n)) t[i--] = 0;
    if (i < 0) return;
  }
}

}  // namespace

std::size_t count_atoms(const DataSet& d, std::string_view relation, Truth value,
                        std::size_t sample) {
  const auto& r = d.relation(relation);
  std::size_t count = 0;
  for_each_distinct_tuple(d.object_count(), r.arity, [&](const std::vector<int>& t) {
    if (d.observation(sample, relation, t) == value) ++count;
  });
  return count;
}

DataSet subsample_false_links(const DataSet& d, std::span<const std::string> relations, double q,
                              std::uint64_t seed) {
  if (!(q > 0.0 && q <= 100.0)) throw DataError("subsampling percentage must lie in (0, 100]");
  DataSet out = d;
  std::mt19937_64 rng(seed);
  for (std::size_t s = 0; s < d.sample_count(); ++s) {
    for (const auto& name : relations) {
      const auto& r = d.relation(name);
      if (r.kind != RelationKind::Probabilistic)
        throw DataError("can only subsample probabilistic relations ('" + name + "')");
      std::vector<std::vector<int>> falses;
      for_each_distinct_tuple(d.object_count(), r.arity, [&](const std::vector<int>& t) {
        if (d.observation(s, name, t) == Truth::False) falses.push_back(t);
      });
      const auto keep = static_cast<std::size_t>(
          std::ceil(q / 100.0 * static_cast<double>(falses.size()) - 1e-9));
      // partial Fisher-Yates: the first `keep` entries form the retained sample
      for (std::size_t i = 0; i < keep && i < falses.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, falses.size() - 1);
        std::swap(falses[i], falses[pick(rng)]);
      }
      for (std::size_t i = keep; i < falses.size(); ++i) {
        out.set_observation(s, name, falses[i], Truth::Unknown, /*mirror=*/false);
      }
    }
  }
  return out;
}

}  // namespace rbn
