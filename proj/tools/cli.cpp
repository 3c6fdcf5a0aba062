#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rlqls/config.hpp"
#include "rlqls/env.hpp"
#include "rlqls/error.hpp"
#include "rlqls/eval.hpp"
#include "rlqls/io.hpp"
#include "rlqls/ising.hpp"
#include "rlqls/policy.hpp"
#include "rlqls/trainer.hpp"

namespace fs = std::filesystem;

namespace rlqls::cli {
namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// RLQLS_THREADS caps every worker count.
std::size_t thread_cap() {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("RLQLS_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) cap = static_cast<std::size_t>(v);
  }
  return cap;
}

void write_resolved(const fs::path& dir, const nlohmann::ordered_json& j) {
  write_text_file(dir / "resolved_config.json", j.dump(2) + "\n");
}

std::string run_dir_name(const nlohmann::ordered_json& resolved) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  char hash[20];
  std::snprintf(hash, sizeof hash, "%08llx",
                static_cast<unsigned long long>(fnv1a64(resolved.dump()) & 0xffffffffULL));
  return std::string(stamp) + "-" + hash;
}

void require_annotated(const InstanceSet& set) {
  for (const auto& p : set.problems)
    if (!p.gse_ref())
      throw ConfigError("problem '" + p.id() +
                        "' has no gse_ref; annotate the file with `rlqls gse --in <file>` first");
}

GseMethod parse_method(const std::string& s) {
  if (s == "auto") return GseMethod::kAuto;
  if (s == "exhaustive") return GseMethod::kExhaustive;
  if (s == "tabu") return GseMethod::kTabu;
  throw UsageError("unknown GSE method '" + s + "' (auto|exhaustive|tabu)");
}

struct GenArgs {
  std::size_t n = 0;
  std::size_t count = 1;
  std::uint64_t seed = 0;
  std::string kind = "train";
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  if (a.n < 2) throw UsageError("--n must be at least 2");
  if (a.count < 1) throw UsageError("--count must be positive");
  const InstanceSet set = generate_set(a.n, a.count, a.seed, a.kind);
  save_instance_set(a.out, set);
  out << "wrote " << a.count << " instances (n = " << a.n << ") to " << a.out << '\n';
  return kExitOk;
}

struct GseArgs {
  std::string in;
  std::string out;
  std::string method = "auto";
  std::uint64_t seed = 0;
};

int cmd_gse(const GseArgs& a, std::ostream& out, std::ostream& err) {
  const GseMethod method = parse_method(a.method);
  InstanceSet set = load_instance_set(a.in);
  int failures = 0;
  for (auto& p : set.problems) {
    try {
      const GseRef ref = annotate_gse(p, method, a.seed);
      out << p.id() << ' ' << format_double(ref.energy) << ' ' << to_string(ref.provenance) << '\n';
    } catch (const CapacityError& e) {
      err << "error: " << p.id() << ": " << e.what() << '\n';
      ++failures;
    }
  }
  save_instance_set(a.out.empty() ? a.in : a.out, set);
  return failures ? kExitRuntime : kExitOk;
}

struct SolveArgs {
  std::string instances;
  std::string policy = "random";
  std::size_t m = 0;
  std::size_t steps = 200;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::string out;
  bool greedy = false;
};

int cmd_solve(const SolveArgs& a, std::ostream& out) {
  if (a.steps < 1) throw UsageError("--steps must be at least 1");
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  const InstanceSet set = load_instance_set(a.instances);
  require_annotated(set);

  Policy policy;
  std::size_t m = a.m;
  if (a.policy == "random") {
    if (m == 0) throw UsageError("--m is required with the random policy");
    policy = make_random_policy(m);
  } else {
    Checkpoint ckpt = load_checkpoint(a.policy);
    if (m == 0) m = ckpt.m;
    if (m != ckpt.m) throw ConfigError("--m differs from the checkpoint's m");
    for (const auto& p : set.problems)
      if (p.n() != ckpt.n)
        throw ConfigError("checkpoint was trained for n = " + std::to_string(ckpt.n) +
                          " but problem '" + p.id() + "' has n = " + std::to_string(p.n()));
    policy = make_net_policy(std::make_shared<const NetParams>(std::move(ckpt.params)), m, a.greedy);
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  nlohmann::ordered_json resolved;
  resolved["subcommand"] = "solve";
  resolved["instances"] = a.instances;
  resolved["policy"] = a.policy;
  resolved["m"] = m;
  resolved["steps"] = a.steps;
  resolved["repeats"] = a.repeats;
  resolved["seed"] = a.seed;
  resolved["greedy_eval"] = a.greedy;
  write_resolved(dir, resolved);

  std::ostringstream summary;
  summary << "problem_id,repeat,initial_energy,final_energy,best_energy,gse_ref,final_ratio,best_ratio\n";
  double best_sum = 0.0;
  std::size_t runs = 0;
  for (const auto& p : set.problems) {
    auto problem = std::make_shared<const IsingProblem>(p);
    for (std::size_t r = 0; r < a.repeats; ++r) {
      QlsEnv env(problem, EnvConfig{m, a.steps, std::nullopt, a.seed});
      EpisodeStreams streams =
          EpisodeStreams::derive(a.seed, derive_seed(fnv1a64(p.id()), "repeat", {r}));
      const EpisodeResult ep = run_episode(env, policy, streams);
      std::ofstream trace(dir / ("trace_" + p.id() + "_r" + std::to_string(r) + ".csv"),
                          std::ios::binary | std::ios::trunc);
      write_trace_csv(trace, ep);
      const double final_energy = ep.records.back().energy;
      summary << p.id() << ',' << r << ',' << format_double(ep.initial_energy) << ','
              << format_double(final_energy) << ',' << format_double(ep.best_energy) << ','
              << format_double(env.gse()) << ',' << format_double(final_energy / env.gse()) << ','
              << format_double(ep.best_energy / env.gse()) << '\n';
      best_sum += ep.best_energy / env.gse();
      ++runs;
    }
  }
  write_text_file(dir / "summary.csv", summary.str());
  out << "mean best ratio over " << runs << " runs: " << format_double(best_sum / runs) << '\n';
  out << "traces written to " << dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::size_t actors = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t iterations = 0;
  bool iterations_given = false;
  std::string out;
  bool quiet = false;
};

InstanceSet prepare_training_set(const TrainConfig& cfg, const fs::path& out_dir, std::ostream& err) {
  if (!cfg.train_set.empty() && fs::exists(cfg.train_set)) {
    InstanceSet set = load_instance_set(cfg.train_set);
    bool changed = false;
    for (auto& p : set.problems) {
      if (!p.gse_ref()) {
        annotate_gse(p, GseMethod::kAuto, cfg.train_seed);
        changed = true;
      }
    }
    if (changed) {
      err << "warning: training set " << cfg.train_set << " was not fully annotated; computed gse_ref\n";
      save_instance_set(cfg.train_set, set);
    }
    return set;
  }
  err << "warning: no training set file; generating " << cfg.train_count << " instances (n = " << cfg.n
      << ", seed = " << cfg.train_seed << ") and computing gse_ref\n";
  InstanceSet set = generate_set(cfg.n, cfg.train_count, cfg.train_seed, "train");
  for (auto& p : set.problems) annotate_gse(p, GseMethod::kAuto, cfg.train_seed);
  save_instance_set(cfg.train_set.empty() ? out_dir / "train_set.json" : fs::path(cfg.train_set), set);
  return set;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  KeyValues overrides;
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (a.actors) overrides["actors"] = std::to_string(a.actors);
  if (a.seed_given) overrides["seed"] = std::to_string(a.seed);
  if (a.iterations_given) overrides["iterations"] = std::to_string(a.iterations);
  if (!a.out.empty()) overrides["out_dir"] = a.out;
  TrainConfig cfg = load_train_config(a.config, overrides);
  cfg.actors = std::min(cfg.actors, thread_cap());
  if (cfg.out_dir.empty()) cfg.out_dir = "train_out";

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  const InstanceSet set = prepare_training_set(cfg, dir, err);
  if (set.problems.front().n() != cfg.n)
    throw ConfigError("training set problem size does not match n = " + std::to_string(cfg.n));

  nlohmann::ordered_json resolved;
  resolved["subcommand"] = "train";
  resolved["config_file"] = a.config;
  resolved["train"] = to_json(cfg);
  write_resolved(dir, resolved);
  write_text_file(dir / "resolved.cfg", to_key_values(cfg));

  const ProblemPool pool = make_pool(set);
  const TrainResult res = learner_loop(cfg, pool, [&](const TrainLogRecord& r) {
    if (!a.quiet)
      err << "iter " << r.iteration << "  return " << format_double(r.mean_return)
          << "  ratio " << format_double(r.mean_approx_ratio) << "  rho " << format_double(r.mean_rho)
          << "  " << format_double(r.seconds) << "s\n";
  });
  out << "trained " << res.log.size() << " iterations; checkpoints and train_log.csv in "
      << dir.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string instances;
  std::string checkpoint;
  std::size_t steps = 200;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::string out = "eval_out";
  bool greedy = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (a.steps < 1) throw UsageError("--steps must be at least 1");
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  const InstanceSet set = load_instance_set(a.instances);
  require_annotated(set);
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  for (const auto& p : set.problems)
    if (p.n() != ckpt.n)
      throw ConfigError("checkpoint was trained for n = " + std::to_string(ckpt.n) +
                        " but problem '" + p.id() + "' has n = " + std::to_string(p.n()));

  EvalSettings settings{ckpt.m, a.steps, a.repeats, a.seed, thread_cap()};
  nlohmann::ordered_json resolved;
  resolved["subcommand"] = "eval";
  resolved["instances"] = a.instances;
  resolved["checkpoint"] = a.checkpoint;
  resolved["m"] = ckpt.m;
  resolved["steps"] = a.steps;
  resolved["repeats"] = a.repeats;
  resolved["seed"] = a.seed;
  resolved["greedy_eval"] = a.greedy;
  const fs::path dir = fs::path(a.out) / run_dir_name(resolved);
  fs::create_directories(dir);
  write_resolved(dir, resolved);

  const auto params = std::make_shared<const NetParams>(std::move(ckpt.params));
  const std::vector<NamedPolicy> policies{{"random", make_random_policy(settings.m)},
                                          {"trained", make_net_policy(params, settings.m, a.greedy)}};
  const EvalReport report = evaluate(set, policies, settings);
  out << summarize(report, dir);
  out << "results written to " << dir.string() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reinforcement-learned sub-problem selection for quantum-style local search on Ising problems",
               "rlqls"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a set of random fully connected Ising instances");
  g->add_option("--n", gen.n, "Problem size")->required();
  g->add_option("--count", gen.count, "Number of instances");
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--kind", gen.kind, "Set kind (train|test)")->check(CLI::IsMember({"train", "test"}));
  g->add_option("--out", gen.out, "Output JSON file")->required();

  GseArgs gse;
  auto* q = app.add_subcommand("gse", "Annotate instances with a reference ground-state energy");
  q->add_option("--in", gse.in, "Instance set file")->required();
  q->add_option("--out", gse.out, "Output file (default: overwrite input)");
  q->add_option("--method", gse.method, "auto|exhaustive|tabu");
  q->add_option("--seed", gse.seed, "Tabu seed");

  SolveArgs solve;
  auto* s = app.add_subcommand("solve", "Run local search with a random or trained selection policy");
  s->add_option("--instances", solve.instances, "Annotated instance set")->required();
  s->add_option("--policy", solve.policy, "'random' or a checkpoint path");
  s->add_option("--m", solve.m, "Sub-problem size");
  s->add_option("--steps", solve.steps, "Steps per episode");
  s->add_option("--repeats", solve.repeats, "Episodes per problem");
  s->add_option("--seed", solve.seed, "Master seed");
  s->add_option("--out", solve.out, "Output directory")->required();
  s->add_flag("--greedy-eval", solve.greedy, "Argmax instead of sampling for checkpoint policies");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a selection policy with the actor-learner loop");
  t->add_option("--config", train.config, "key = value config file")->required();
  t->add_option("--set", train.sets, "Override a config key (key=value), repeatable");
  t->add_option("--actors", train.actors, "Actor threads (1 = deterministic)");
  auto* seed_opt = t->add_option("--seed", train.seed, "Master seed");
  auto* iter_opt = t->add_option("--iterations", train.iterations, "Training iterations");
  t->add_option("--out", train.out, "Output directory");
  t->add_flag("--quiet", train.quiet, "No per-iteration progress");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Compare a trained checkpoint against random selection");
  e->add_option("--instances", ev.instances, "Annotated held-out instance set")->required();
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint JSON")->required();
  e->add_option("--steps", ev.steps, "Steps per episode");
  e->add_option("--repeats", ev.repeats, "Episodes per problem and policy");
  e->add_option("--seed", ev.seed, "Master seed");
  e->add_option("--out", ev.out, "Parent directory for the run directory");
  e->add_flag("--greedy-eval", ev.greedy, "Argmax instead of sampling for the trained policy");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& ex) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (q->parsed()) return cmd_gse(gse, out, err);
    if (s->parsed()) return cmd_solve(solve, out);
    if (t->parsed()) {
      train.seed_given = seed_opt->count() > 0;
      train.iterations_given = iter_opt->count() > 0;
      return cmd_train(train, out, err);
    }
    if (e->parsed()) return cmd_eval(ev, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& ex) {
    err << "invalid input: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace rlqls::cli
