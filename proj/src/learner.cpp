#include "rbn/learner.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <mutex>
#include <chrono>
#include <cmath>
#include <thread>

#include "rbn/error.hpp"
#include "rbn/grounding.hpp"

namespace rbn {

std::vector<double> random_initialization(const LikelihoodGraph& g, std::mt19937_64& rng) {
  std::vector<double> v;
  v.reserve(g.leaves().size());
  for (const Leaf& l : g.leaves()) {
    if (l.kind == LeafKind::Indicator) {
      v.push_back(std::bernoulli_distribution(0.5)(rng) ? 1.0 : 0.0);
      continue;
    }
    const Interval& r = l.range;
    double lo = -1.0, hi = 1.0;
    if (r.bounded()) {
      lo = r.lo;
      hi = r.hi;
    } else if (r.lo > -kInfinity) {
      lo = r.lo;
      hi = r.lo + 1.0;
    } else if (r.hi < kInfinity) {
      lo = r.hi - 1.0;
      hi = r.hi;
    }
    v.push_back(lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng));
  }
  return v;
}

RestartResult ascend(Evaluator& ev, const FitConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const LikelihoodGraph& g = ev.graph();
  std::vector<std::size_t> free;
  for (std::size_t i = 0; i < g.leaves().size(); ++i)
    if (g.leaves()[i].kind != LeafKind::Indicator) free.push_back(i);

  RestartResult res;
  double ll = ev.log_likelihood();
  if (!std::isfinite(ll)) throw NumericalError("log-likelihood is not finite at the starting point");
  std::vector<double> grad;
  // steps follow the gradient of the mean per-term log-likelihood, so the
  // step size does not depend on the amount of data
  const double scale = config.per_term_step ? 1.0 / static_cast<double>(std::max<std::size_t>(g.tops().size(), 1)) : 1.0;
  auto take_gradient = [&] {
    grad = ev.gradient();
    for (double& x : grad) x *= scale;
    for (std::size_t i : free)
      if (!std::isfinite(grad[i]))
        throw NumericalError("non-finite gradient at leaf " + std::to_string(i) + " (" +
                             g.leaves()[i].name + ")");
  };
  take_gradient();
  std::vector<double> current(free.size()), proposal(free.size());
  double step = config.initial_step;
  int small = 0;
  while (res.iterations < config.max_iterations) {
    ++res.iterations;
    bool moved = false;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const std::size_t i = free[k];
      current[k] = ev.leaf_value(i);
      proposal[k] = g.leaves()[i].range.clip(current[k] + step * grad[i]);
      if (proposal[k] != current[k]) moved = true;
    }
    if (!moved) {
      res.converged = true;
      break;
    }
    for (std::size_t k = 0; k < free.size(); ++k) ev.set_leaf_value(free[k], proposal[k]);
    const double next = ev.log_likelihood();
    if (next > ll) {
      const double gain = (next - ll) / std::max(std::abs(ll), 1.0);
      ll = next;
      step *= config.grow;
      take_gradient();
      if (config.record_trace) res.trace.push_back(ll);
      if (gain < config.tolerance) {
        if (++small >= config.patience) {
          res.converged = true;
          break;
        }
      } else {
        small = 0;
      }
    } else {
      for (std::size_t k = 0; k < free.size(); ++k) ev.set_leaf_value(free[k], current[k]);
      step *= config.shrink;
    }
  }
  res.log_likelihood = ev.log_likelihood();
  res.values.assign(ev.leaf_values().begin(), ev.leaf_values().end());
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

namespace {

RestartResult run_restart(const LikelihoodGraph& g, const FitConfig& config, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::mt19937_64 rng(seq);
  const auto start = std::chrono::steady_clock::now();
  Evaluator ev(g);
  ev.set_leaf_values(random_initialization(g, rng));
  const bool has_unknowns = !g.leaves_of(LeafKind::Indicator).empty();
  RestartResult total;
  const int rounds = has_unknowns ? std::max(config.em_rounds, 1) : 1;
  for (int round = 0; round < rounds; ++round) {
    RestartResult r = ascend(ev, config);
    total.iterations += r.iterations;
    total.converged = r.converged;
    total.trace.insert(total.trace.end(), r.trace.begin(), r.trace.end());
    if (!has_unknowns) break;
    const MapResult m = map_inference(g, ev.leaf_values());
    bool changed = false;
    for (std::size_t i : g.leaves_of(LeafKind::Indicator))
      if (m.leaf_values[i] != ev.leaf_value(i)) changed = true;
    ev.set_leaf_values(m.leaf_values);
    if (!changed) break;
  }
  total.log_likelihood = ev.log_likelihood();
  total.values.assign(ev.leaf_values().begin(), ev.leaf_values().end());
  total.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return total;
}

}  // namespace

FitResult fit(const LikelihoodGraph& g, const FitConfig& config) {
  if (config.restarts < 1) throw ModelError("at least one restart is required");
  if (g.leaves().size() == g.leaves_of(LeafKind::Indicator).size())
    throw ModelError("the model has no learnable parameters or numeric atoms");
  FitResult out;
  out.restarts.resize(static_cast<std::size_t>(config.restarts));
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(config.restarts));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r; (r = next++) < config.restarts;) {
      try {
        out.restarts[static_cast<std::size_t>(r)] = run_restart(g, config, r);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.restarts;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t r = 1; r < out.restarts.size(); ++r)
    if (out.restarts[r].log_likelihood > out.restarts[out.best_restart].log_likelihood)
      out.best_restart = r;
  out.log_likelihood = out.restarts[out.best_restart].log_likelihood;
  out.leaf_values = out.restarts[out.best_restart].values;
  return out;
}

MapResult map_inference(const LikelihoodGraph& g, std::span<const double> values,
                        std::size_t exhaustive_limit) {
  Evaluator ev(g);
  ev.set_leaf_values(values);
  const auto ind = g.leaves_of(LeafKind::Indicator);
  MapResult res;
  if (ind.size() <= exhaustive_limit) {
    res.exhaustive = true;
    for (std::size_t i : ind) ev.set_leaf_value(i, 0.0);
    double best = ev.log_likelihood();
    std::uint64_t best_mask = 0, gray = 0;
    // Gray code order flips one indicator per step
    for (std::uint64_t k = 1; k < (std::uint64_t{1} << ind.size()); ++k) {
      const std::uint64_t next = k ^ (k >> 1);
      const int bit = std::countr_zero(next ^ gray);
      gray = next;
      ev.set_leaf_value(ind[static_cast<std::size_t>(bit)], (gray >> bit) & 1 ? 1.0 : 0.0);
      const double ll = ev.log_likelihood();
      if (ll > best) {
        best = ll;
        best_mask = gray;
      }
    }
    for (std::size_t j = 0; j < ind.size(); ++j)
      ev.set_leaf_value(ind[j], (best_mask >> j) & 1 ? 1.0 : 0.0);
  } else {
    for (std::size_t i : ind) ev.set_leaf_value(i, values[i] > 0.5 ? 1.0 : 0.0);
    double ll = ev.log_likelihood();
    for (int sweep = 0; sweep < 1000; ++sweep) {
      bool changed = false;
      for (std::size_t i : ind) {
        const double old = ev.leaf_value(i);
        ev.set_leaf_value(i, 1.0 - old);
        const double flipped = ev.log_likelihood();
        if (flipped > ll) {
          ll = flipped;
          changed = true;
        } else {
          ev.set_leaf_value(i, old);
        }
      }
      if (!changed) break;
    }
  }
  res.log_likelihood = ev.log_likelihood();
  res.leaf_values.assign(ev.leaf_values().begin(), ev.leaf_values().end());
  return res;
}

GibbsResult gibbs_marginals(const LikelihoodGraph& g, std::span<const double> values,
                            std::size_t sweeps, std::size_t burn_in, std::uint64_t seed) {
  if (sweeps == 0) throw ModelError("Gibbs sampling needs at least one sweep");
  Evaluator ev(g);
  ev.set_leaf_values(values);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  GibbsResult res;
  res.indicators = g.leaves_of(LeafKind::Indicator);
  res.marginals.assign(res.indicators.size(), 0.0);
  for (std::size_t i : res.indicators) ev.set_leaf_value(i, values[i] > 0.5 ? 1.0 : 0.0);
  double ll = ev.log_likelihood();
  if (res.indicators.empty()) {
    res.expected_log_likelihood = ll;
    return res;
  }
  double ll_sum = 0.0;
  for (std::size_t s = 0; s < burn_in + sweeps; ++s) {
    for (std::size_t i : res.indicators) {
      const double old = ev.leaf_value(i);
      ev.set_leaf_value(i, 1.0 - old);
      const double flipped = ev.log_likelihood();
      // P(flip) = L_flipped / (L_old + L_flipped)
      const double p_flip = 1.0 / (1.0 + std::exp(ll - flipped));
      if (unit(rng) < p_flip)
        ll = flipped;
      else
        ev.set_leaf_value(i, old);
    }
    if (s >= burn_in) {
      for (std::size_t j = 0; j < res.indicators.size(); ++j)
        res.marginals[j] += ev.leaf_value(res.indicators[j]);
      ll_sum += ll;
    }
  }
  for (double& m : res.marginals) m /= static_cast<double>(sweeps);
  res.expected_log_likelihood = ll_sum / static_cast<double>(sweeps);
  return res;
}

// ---------------------------------------------------------------------------

namespace {

class SamplingContext : public DataContext {
 public:
  SamplingContext(const Model& m, const DataSet& d, const GroundModel& ground,
                  const std::vector<std::int8_t>& sampled)
      : DataContext(m, d), ground_(ground), sampled_(sampled) {}

 protected:
  double probabilistic_value(const RelationDecl& r, std::span<const int> args) const override {
    const auto ri = static_cast<std::uint32_t>(&r - model().relations().data());
    auto id = ground_.find(ri, args);
    if (!id) return 0.0;
    if (sampled_[*id] < 0)
      throw ModelError("sampling order violated at " + to_string(GroundAtom{r.name, {args.begin(), args.end()}}));
    return sampled_[*id];
  }

 private:
  const GroundModel& ground_;
  const std::vector<std::int8_t>& sampled_;
};

}  // namespace

DataSet forward_sample(const Model& model, const DataSet& data, std::size_t count,
                       std::uint64_t seed, const SampleValues& values) {
  if (count == 0) throw DataError("sample count must be positive");
  std::vector<RelationSchema> schemas;
  for (const auto& r : data.relations()) {
    RelationSchema s = r;
    if (s.kind == RelationKind::Probabilistic) {
      s.closed_world = true;
      s.directed = true;
    }
    schemas.push_back(s);
  }
  for (const auto& r : model.relations())
    if (r.kind == RelationKind::Probabilistic && !data.find_relation(r.name))
      schemas.push_back({r.name, r.arity, RelationKind::Probabilistic, {}, true, true});
  DataSet out(data.labels(), schemas);
  for (const auto& r : data.relations())
    if (r.kind != RelationKind::Probabilistic)
      for (const auto& e : data.stored_inputs(r.name)) out.set_input(r.name, e.args, e.value);
  for (std::size_t s = 1; s < count; ++s) out.add_sample();

  const GroundModel ground(model, data);
  const auto order = ground.topological_order();
  std::vector<std::int8_t> sampled(ground.atoms().size(), -1);
  SamplingContext ctx(model, data, ground, sampled);
  for (const auto& [name, v] : values.parameters) ctx.set_parameter(name, v);
  for (const auto& [atom, v] : values.numeric) ctx.set_numeric(atom.relation, atom.args, v);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& rels = model.relations();
  for (std::size_t s = 0; s < count; ++s) {
    std::fill(sampled.begin(), sampled.end(), -1);
    for (std::uint32_t id : order) {
      const auto& atom = ground.atoms()[id];
      const Assignment* a = model.assignment_for(rels[atom.relation].name);
      Binding b(a->vars, atom.args);
      const double p = evaluate_probability(*a->formula, b, ctx);
      sampled[id] = unit(rng) < p ? 1 : 0;
      if (sampled[id]) out.set_observation(s, rels[atom.relation].name, atom.args, Truth::True, false);
    }
  }
  return out;
}

SampleValues extract_values(const LikelihoodGraph& g, std::span<const double> leaf_values) {
  SampleValues v;
  for (std::size_t i = 0; i < g.leaves().size(); ++i) {
    const Leaf& l = g.leaves()[i];
    if (l.kind == LeafKind::Parameter)
      v.parameters[l.name] = leaf_values[i];
    else if (l.kind == LeafKind::NumericAtom)
      v.numeric.push_back({GroundAtom{l.name, l.args}, leaf_values[i]});
  }
  return v;
}

}  // namespace rbn
