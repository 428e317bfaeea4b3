// rbn: learn relational Bayesian network models from relational data.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rbn/community.hpp"
#include "rbn/dataset.hpp"
#include "rbn/error.hpp"
#include "rbn/learner.hpp"
#include "rbn/likelihood_graph.hpp"
#include "rbn/model_parser.hpp"
#include "rbn/serialization.hpp"

namespace fs = std::filesystem;
using rbn::Json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kModel = 3, kNumerical = 4 };

struct Options {
  std::string model, data, out = ".", result;
  int restarts = 20;
  int gain_restarts = 10;
  std::uint64_t seed = 1;
  int max_iter = 5000;
  double tol = 1e-7;
  double step = 0.01;
  unsigned threads = 0;
  int em_rounds = 10;
  std::vector<std::string> fix, set, freeze;
  std::size_t n = 0;
  int communities = 2;
  std::string variant = "inner-product";
  int distance_sign = -1;
  std::vector<std::string> relations;
  std::vector<double> q_list{100, 50, 20, 10, 5};
  std::string dot;
  bool no_fold = false;
  bool no_gain = false;
};

class Timer {
 public:
  void phase(const std::string& name) {
    const auto now = std::chrono::steady_clock::now();
    timings_[name] = std::chrono::duration<double>(now - start_).count();
    start_ = now;
  }
  const std::map<std::string, double>& timings() const { return timings_; }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  std::map<std::string, double> timings_;
};

std::map<std::string, double> parse_assignments(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& s : items) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("expected name=value, got '" + s + "'");
    const std::string value = s.substr(eq + 1);
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty())
      throw CLI::ValidationError("'" + value + "' is not a number");
    out[s.substr(0, eq)] = v;
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw rbn::IoError("cannot write " + path.string());
  f << text;
  if (!f) throw rbn::IoError("write failed for " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

rbn::FitConfig fit_config(const Options& o, int restarts) {
  rbn::FitConfig c;
  c.restarts = restarts;
  c.max_iterations = o.max_iter;
  c.tolerance = o.tol;
  c.initial_step = o.step;
  c.seed = o.seed;
  c.threads = o.threads;
  c.em_rounds = o.em_rounds;
  if (c.restarts < 1) throw CLI::ValidationError("--restarts must be at least 1");
  if (!(c.tolerance > 0)) throw CLI::ValidationError("--tol must be positive");
  return c;
}

Json config_json(const rbn::FitConfig& c) {
  return {{"restarts", c.restarts},       {"max_iterations", c.max_iterations},
          {"tolerance", c.tolerance},     {"initial_step", c.initial_step},
          {"grow", c.grow},               {"shrink", c.shrink},
          {"patience", c.patience},       {"seed", c.seed},
          {"em_rounds", c.em_rounds}};
}

void write_manifest(const Options& o, const std::string& command, const std::vector<std::string>& argv,
                    const Json& config, const Timer& t) {
  Json m;
  m["command"] = command;
  m["argv"] = argv;
  m["model"] = o.model;
  m["data"] = o.data;
  m["seed"] = o.seed;
  m["config"] = config;
  m["out"] = o.out;
  m["timings"] = t.timings();
  write_json(fs::path(o.out) / "manifest.json", m);
}

rbn::CommunitySpec community_spec(const Options& o, const rbn::DataSet& d) {
  rbn::CommunitySpec spec;
  spec.communities = o.communities;
  spec.variant = rbn::community_variant_from_name(o.variant);
  spec.distance_sign = o.distance_sign;
  spec.relations = o.relations.empty() ? rbn::probabilistic_relations(d) : o.relations;
  return spec;
}

int cmd_learn(const Options& o, const std::vector<std::string>& argv) {
  Timer t;
  const rbn::Model model = rbn::load_model(o.model);
  const rbn::DataSet data = rbn::load_dataset(o.data);
  t.phase("load_seconds");
  rbn::BuildOptions b;
  b.fixed_parameters = parse_assignments(o.fix);
  b.frozen_relations.insert(o.freeze.begin(), o.freeze.end());
  b.fold_constants = !o.no_fold;
  const auto g = rbn::LikelihoodGraph::build(model, data, b);
  t.phase("graph_build_seconds");
  const auto cfg = fit_config(o, o.restarts);
  const rbn::FitResult r = rbn::fit(g, cfg);
  t.phase("fit_seconds");
  Json j = rbn::fit_to_json(g, r, data.labels());
  j["graph"] = rbn::stats_to_json(g.stats());
  write_json(fs::path(o.out) / "fit.json", j);
  write_file(fs::path(o.out) / "trace.csv", rbn::trace_csv(r));
  Json config = config_json(cfg);
  config["fix"] = b.fixed_parameters;
  config["freeze"] = o.freeze;
  config["fold_constants"] = b.fold_constants;
  write_manifest(o, "learn", argv, config, t);
  std::printf("best log-likelihood %s (restart %zu of %d)\n", rbn::format_number(r.log_likelihood).c_str(),
              r.best_restart + 1, cfg.restarts);
  for (const auto& [name, value] : j["params"].items())
    std::printf("  %s = %s\n", name.c_str(), value.dump().c_str());
  return kOk;
}

int cmd_sample(const Options& o, const std::vector<std::string>& argv) {
  Timer t;
  const rbn::Model model = rbn::load_model(o.model);
  const rbn::DataSet data = rbn::load_dataset(o.data);
  rbn::SampleValues values;
  values.parameters = parse_assignments(o.set);
  const rbn::DataSet out = rbn::forward_sample(model, data, o.n, o.seed, values);
  t.phase("sample_seconds");
  const fs::path target = fs::path(o.out) / "samples.json";
  fs::create_directories(o.out);
  rbn::save_dataset(out, target);
  Json config{{"n", o.n}, {"set", values.parameters}};
  write_manifest(o, "sample", argv, config, t);
  std::printf("wrote %zu samples to %s\n", o.n, target.string().c_str());
  return kOk;
}

void write_community(const fs::path& dir, const rbn::CommunityResult& r) {
  write_json(dir / "community.json", rbn::community_to_json(r));
  write_file(dir / "u.csv", rbn::matrix_csv(r.nodes, r.u, "node"));
  if (!r.t.empty()) write_file(dir / "t.csv", rbn::matrix_csv(r.spec.relations, r.t, "relation"));
}

int cmd_community(const Options& o, const std::vector<std::string>& argv) {
  Timer t;
  const rbn::DataSet data = rbn::load_dataset(o.data);
  const auto spec = community_spec(o, data);
  t.phase("load_seconds");
  const auto cfg = fit_config(o, o.restarts);
  const rbn::CommunityResult r = rbn::fit_community_model(data, spec, cfg);
  t.phase("fit_seconds");
  write_community(o.out, r);
  write_file(fs::path(o.out) / "model.rbn", rbn::community_model_text(spec));
  write_file(fs::path(o.out) / "trace.csv", rbn::trace_csv(r.fit));
  const auto er = rbn::er_baseline(data, spec.relations);
  std::printf("%s model, %d communities: best log-likelihood %s (ER baseline %s)\n",
              std::string(rbn::to_string(spec.variant)).c_str(), spec.communities,
              rbn::format_number(r.log_likelihood).c_str(), rbn::format_number(er.log_likelihood).c_str());
  if (!o.no_gain) {
    const auto rep = rbn::significance(data, r, fit_config(o, o.gain_restarts));
    t.phase("gain_seconds");
    write_json(fs::path(o.out) / "significance.json", rbn::significance_to_json(rep));
    for (std::size_t c = 0; c < rep.gains.size(); ++c)
      std::printf("  gain C%zu = %.2f\n", c + 1, rep.gains[c]);
  }
  Json config = config_json(cfg);
  config["communities"] = spec.communities;
  config["variant"] = o.variant;
  config["distance_sign"] = spec.distance_sign;
  config["relations"] = spec.relations;
  config["gain_restarts"] = o.gain_restarts;
  write_manifest(o, "community", argv, config, t);
  return kOk;
}

int cmd_gain(const Options& o, const std::vector<std::string>& argv) {
  Timer t;
  const rbn::DataSet data = rbn::load_dataset(o.data);
  std::ifstream in(o.result);
  if (!in) throw rbn::IoError("cannot open " + o.result);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw rbn::DataError(o.result + ": " + e.what());
  }
  const rbn::CommunityResult r = rbn::community_from_json(j);
  if (r.nodes != data.labels()) throw rbn::DataError("community result was fitted on different nodes");
  const auto cfg = fit_config(o, o.gain_restarts);
  const auto rep = rbn::significance(data, r, cfg);
  t.phase("gain_seconds");
  write_json(fs::path(o.out) / "significance.json", rbn::significance_to_json(rep));
  for (std::size_t c = 0; c < rep.gains.size(); ++c) std::printf("gain C%zu = %.2f\n", c + 1, rep.gains[c]);
  write_manifest(o, "gain", argv, config_json(cfg), t);
  return kOk;
}

int cmd_subsample(const Options& o, const std::vector<std::string>& argv) {
  Timer t;
  const rbn::DataSet data = rbn::load_dataset(o.data);
  const auto spec = community_spec(o, data);
  const auto cfg = fit_config(o, o.restarts);
  const auto runs = rbn::subsample_experiment(data, spec, o.q_list, cfg, o.seed);
  t.phase("experiment_seconds");
  const fs::path dir = o.out;
  write_json(dir / "subsample.json", rbn::subsample_to_json(runs));
  std::ostringstream summary;
  summary << "q,observed_atoms,mean_restart_seconds,log_likelihood,refit_ll\n";
  for (const auto& run : runs) {
    double mean = 0;
    for (double s : run.restart_seconds) mean += s;
    mean /= static_cast<double>(run.restart_seconds.size());
    summary << rbn::format_number(run.q) << ',' << run.observed_atoms << ',' << rbn::format_number(mean) << ','
            << rbn::format_number(run.result.log_likelihood) << ','
            << rbn::format_number(run.refit.log_likelihood) << '\n';
    const std::string tag = "q" + rbn::format_number(run.q);
    write_community(dir / tag, run.result);
    std::vector<std::string> names;
    for (int c = 1; c <= spec.communities; ++c) names.push_back("C" + std::to_string(c));
    write_file(dir / tag / "correlations.csv", rbn::matrix_csv(names, run.match.correlations, "reference"));
    std::printf("q=%s: %zu atoms, LL %.2f, full-data refit LL %.2f\n", rbn::format_number(run.q).c_str(),
                run.observed_atoms, run.result.log_likelihood, run.refit.log_likelihood);
  }
  write_file(dir / "summary.csv", summary.str());
  Json config = config_json(cfg);
  config["q_list"] = o.q_list;
  config["communities"] = spec.communities;
  config["variant"] = o.variant;
  config["relations"] = spec.relations;
  write_manifest(o, "subsample", argv, config, t);
  return kOk;
}

int cmd_stats(const Options& o) {
  const rbn::Model model = rbn::load_model(o.model);
  const rbn::DataSet data = rbn::load_dataset(o.data);
  rbn::BuildOptions b;
  b.fixed_parameters = parse_assignments(o.fix);
  b.frozen_relations.insert(o.freeze.begin(), o.freeze.end());
  b.fold_constants = !o.no_fold;
  const auto start = std::chrono::steady_clock::now();
  const auto g = rbn::LikelihoodGraph::build(model, data, b);
  Json j = rbn::stats_to_json(g.stats());
  j["build_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << j.dump(2) << "\n";
  if (!o.dot.empty()) write_file(o.dot, g.to_dot());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn relational Bayesian network models from relational data"};
  app.require_subcommand(1);
  Options o;
  std::vector<std::string> args(argv, argv + argc);

  auto fit_flags = [&](CLI::App* c) {
    c->add_option("--restarts", o.restarts, "random restarts")->capture_default_str();
    c->add_option("--seed", o.seed, "random seed")->capture_default_str();
    c->add_option("--max-iter", o.max_iter, "iterations per restart")->capture_default_str();
    c->add_option("--tol", o.tol, "relative log-likelihood gain tolerance")->capture_default_str();
    c->add_option("--step", o.step, "initial step size")->capture_default_str();
    c->add_option("--threads", o.threads, "worker threads (0: all cores)");
    c->add_option("--out", o.out, "output directory")->capture_default_str();
  };
  auto community_flags = [&](CLI::App* c) {
    c->add_option("--communities", o.communities, "number of communities")->capture_default_str();
    c->add_option("--variant", o.variant, "inner-product | distance | multi-relational")
        ->check(CLI::IsMember({"inner-product", "distance", "multi-relational"}))
        ->capture_default_str();
    c->add_option("--distance-sign", o.distance_sign, "sign of the squared distance term")
        ->check(CLI::IsMember({-1, 1}))
        ->capture_default_str();
    c->add_option("--relations", o.relations, "relations to model (default: all probabilistic)")
        ->delimiter(',');
  };

  auto* learn = app.add_subcommand("learn", "fit parameters and learnable numeric atoms");
  learn->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  learn->add_option("--data", o.data, "data file")->required()->check(CLI::ExistingFile);
  learn->add_option("--fix", o.fix, "hold a parameter fixed, name=value");
  learn->add_option("--freeze", o.freeze, "keep a learnable numeric relation at its data values");
  learn->add_option("--em-rounds", o.em_rounds, "gradient/MAP rounds with unknown atoms")->capture_default_str();
  learn->add_flag("--no-fold", o.no_fold, "disable constant folding");
  fit_flags(learn);

  auto* sample = app.add_subcommand("sample", "draw independent samples from a model");
  sample->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  sample->add_option("--data", o.data, "domain and input data")->required()->check(CLI::ExistingFile);
  sample->add_option("--n", o.n, "number of samples")->required();
  sample->add_option("--set", o.set, "parameter value, name=value");
  sample->add_option("--seed", o.seed, "random seed")->capture_default_str();
  sample->add_option("--out", o.out, "output directory")->capture_default_str();

  auto* community = app.add_subcommand("community", "fit a latent community model");
  community->add_option("--data", o.data, "network data")->required()->check(CLI::ExistingFile);
  community->add_option("--gain-restarts", o.gain_restarts, "restarts per likelihood-gain fit")
      ->capture_default_str();
  community->add_flag("--no-gain", o.no_gain, "skip the likelihood gains");
  community_flags(community);
  fit_flags(community);

  auto* gain = app.add_subcommand("gain", "likelihood gain of each community of a fitted result");
  gain->add_option("--data", o.data, "network data")->required()->check(CLI::ExistingFile);
  gain->add_option("--result", o.result, "community.json")->required()->check(CLI::ExistingFile);
  gain->add_option("--gain-restarts,--restarts", o.gain_restarts, "restarts per fit")->capture_default_str();
  gain->add_option("--seed", o.seed, "random seed")->capture_default_str();
  gain->add_option("--max-iter", o.max_iter, "iterations per restart")->capture_default_str();
  gain->add_option("--tol", o.tol, "relative log-likelihood gain tolerance")->capture_default_str();
  gain->add_option("--out", o.out, "output directory")->capture_default_str();

  auto* subsample = app.add_subcommand("subsample", "community fits on subsampled false links");
  subsample->add_option("--data", o.data, "network data")->required()->check(CLI::ExistingFile);
  subsample->add_option("--q-list", o.q_list, "percentages of false links kept")
      ->delimiter(',')
      ->check(CLI::Range(1e-9, 100.0))
      ->capture_default_str();
  community_flags(subsample);
  fit_flags(subsample);

  auto* stats = app.add_subcommand("stats", "likelihood graph size");
  stats->add_option("--model", o.model, "model file")->required()->check(CLI::ExistingFile);
  stats->add_option("--data", o.data, "data file")->required()->check(CLI::ExistingFile);
  stats->add_option("--fix", o.fix, "hold a parameter fixed, name=value");
  stats->add_option("--freeze", o.freeze, "keep a learnable numeric relation at its data values");
  stats->add_option("--dot", o.dot, "write the graph in DOT format");
  stats->add_flag("--no-fold", o.no_fold, "disable constant folding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*learn) return cmd_learn(o, args);
    if (*sample) return cmd_sample(o, args);
    if (*community) return cmd_community(o, args);
    if (*gain) return cmd_gain(o, args);
    if (*subsample) return cmd_subsample(o, args);
    if (*stats) return cmd_stats(o);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "rbn: " << e.what() << "\n";
    return kUsage;
  } catch (const rbn::SyntaxError& e) {
    std::cerr << "rbn: " << o.model << ":" << e.what() << "\n";
    return kModel;
  } catch (const rbn::ModelError& e) {
    std::cerr << "rbn: model error: " << e.what() << "\n";
    return kModel;
  } catch (const rbn::NumericalError& e) {
    std::cerr << "rbn: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const rbn::Error& e) {
    std::cerr << "rbn: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "rbn: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
