#include "rlqls/env.hpp"

#include <cmath>
#include <iostream>
#include <numeric>

#include "rlqls/error.hpp"
#include "rlqls/io.hpp"

namespace rlqls {

GraphFeatures make_graph_features(const IsingProblem& problem) {
  auto g = std::make_shared<std::vector<double>>(problem.upper_triangle());
  g->insert(g->end(), problem.fields().begin(), problem.fields().end());
  return g;
}

SubSolution exact_sub_solver(const SubProblem& sub, Rng&) { return solve_exact(sub); }

bool metropolis_accept(double delta, double gamma, Rng& rng) {
  if (delta < 0.0) return true;
  return rng.uniform() < std::exp(-gamma * delta);
}

void validate_action(const ActionChoice& action, std::size_t n, std::size_t m) {
  RLQLS_REQUIRE(action.indices.size() == m, "action must select exactly m indices");
  for (std::size_t a = 0; a < m; ++a) {
    RLQLS_REQUIRE(action.indices[a] < n, "action index out of range");
    for (std::size_t b = 0; b < a; ++b)
      RLQLS_REQUIRE(action.indices[a] != action.indices[b], "action indices must be distinct");
  }
}

QlsEnv::QlsEnv(std::shared_ptr<const IsingProblem> problem, EnvConfig cfg, SubSolver solver)
    : problem_(std::move(problem)), cfg_(cfg), solver_(std::move(solver)) {
  RLQLS_REQUIRE(problem_ != nullptr, "environment needs a problem");
  const auto& ref = problem_->gse_ref();
  if (!ref) {
    throw ConfigError("problem '" + problem_->id() +
                      "' has no gse_ref; run the GSE oracle first (rlqls gse)");
  }
  if (ref->energy == 0.0) throw ConfigError("problem '" + problem_->id() + "' has gse_ref = 0");
  RLQLS_REQUIRE(cfg_.m >= 1 && cfg_.m <= problem_->n(), "sub-problem size must satisfy 1 <= m <= n");
  RLQLS_REQUIRE(cfg_.episode_len >= 1, "episode length must be at least 1");
  gse_ = ref->energy;
  provenance_ = ref->provenance;
  if (cfg_.gamma_accept) {
    RLQLS_REQUIRE(std::isfinite(*cfg_.gamma_accept) && *cfg_.gamma_accept > 0.0,
                  "gamma_accept must be finite and positive");
    gamma_ = *cfg_.gamma_accept;
  } else {
    gamma_ = 100.0 / std::abs(gse_);
  }
  graph_ = make_graph_features(*problem_);
}

AgentState QlsEnv::reset(Rng& init_rng) const {
  AgentState s;
  s.graph = graph_;
  s.current = SpinConfig::random(problem_->n(), init_rng);
  s.previous = s.current;
  s.energy = energy(*problem_, s.current);
  s.t = 0;
  return s;
}

Transition QlsEnv::step(const AgentState& state, const ActionChoice& action, Rng& accept_rng) {
  const std::size_t n = problem_->n();
  validate_action(action, n, cfg_.m);
  RLQLS_REQUIRE(state.current.size() == n, "state does not belong to this environment");
  RLQLS_REQUIRE(state.t < cfg_.episode_len, "episode already finished");

  const SubProblem sub = extract(*problem_, state.current, action.indices);
  const SubSolution sol = solver_(sub, accept_rng);
  RLQLS_REQUIRE(sol.assignment.size() == cfg_.m, "sub-solver returned a wrong-sized assignment");

  std::vector<std::size_t> flips;
  for (std::size_t a = 0; a < cfg_.m; ++a)
    if (sol.assignment[a] != state.current[action.indices[a]]) flips.push_back(action.indices[a]);
  const double delta = delta_energy(*problem_, state.current, flips);
  const bool accepted = metropolis_accept(delta, gamma_, accept_rng);

  Transition tr;
  tr.next.graph = state.graph;
  tr.next.previous = state.current;
  tr.next.t = state.t + 1;
  if (accepted) {
    tr.next.current = state.current.flipped(flips);
    tr.next.energy = state.energy + delta;
  } else {
    tr.next.current = state.current;
    tr.next.energy = state.energy;
  }

  if (tr.next.energy < gse_) {
    if (provenance_ == GseProvenance::kTabu) {
      std::cerr << "warning: trial energy " << tr.next.energy << " undercuts tabu gse_ref "
                << gse_ << " on '" << problem_->id() << "'; updating reference\n";
      gse_ = tr.next.energy;
      gse_refined_ = true;
    } else if (tr.next.energy < gse_ - 1e-9) {
      throw ContractError("trial energy below exhaustive gse_ref on '" + problem_->id() + "'");
    }
  }

  tr.reward = tr.next.energy / gse_;
  tr.info.step = tr.next.t;
  tr.info.action = action;
  tr.info.reward = tr.reward;
  tr.info.energy = tr.next.energy;
  tr.info.delta_energy = delta;
  tr.info.accepted = accepted;
  tr.info.done = tr.next.t == cfg_.episode_len;
  return tr;
}

std::pair<ActionChoice, double> random_policy(const AgentState& state, std::size_t m, Rng& rng) {
  const std::size_t n = state.current.size();
  RLQLS_REQUIRE(m <= n, "random_policy requires m <= n");
  // Partial Fisher-Yates: the first m slots are an ordered uniform draw.
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  ActionChoice action;
  action.indices.reserve(m);
  double log_prob = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t j = k + static_cast<std::size_t>(rng.below(n - k));
    std::swap(pool[k], pool[j]);
    action.indices.push_back(pool[k]);
    log_prob -= std::log(static_cast<double>(n - k));
  }
  return {std::move(action), log_prob};
}

Policy make_random_policy(std::size_t m) {
  return [m](const AgentState& s, Rng& rng) { return random_policy(s, m, rng); };
}

EpisodeStreams EpisodeStreams::derive(std::uint64_t seed, std::uint64_t episode_key,
                                      std::uint64_t policy_key) {
  return {Rng(seed, "init", {episode_key}), Rng(seed, "policy", {episode_key, policy_key}),
          Rng(seed, "accept", {episode_key, policy_key})};
}

EpisodeResult run_episode(QlsEnv& env, const Policy& policy, EpisodeStreams& streams) {
  EpisodeResult result;
  AgentState state = env.reset(streams.init);
  result.initial_energy = state.energy;
  result.best_energy = state.energy;
  result.best_config = state.current;
  result.records.reserve(env.config().episode_len);
  for (std::size_t t = 0; t < env.config().episode_len; ++t) {
    auto [action, log_prob] = policy(state, streams.policy);
    Transition tr = env.step(state, action, streams.accept);
    if (tr.next.energy < result.best_energy) {
      result.best_energy = tr.next.energy;
      result.best_config = tr.next.current;
    }
    tr.info.behavior_log_prob = log_prob;
    tr.info.best_energy = result.best_energy;
    result.episode_return += tr.reward;
    result.records.push_back(std::move(tr.info));
    state = std::move(tr.next);
  }
  return result;
}

void write_trace_csv(std::ostream& out, const EpisodeResult& episode) {
  out << "step,energy,reward,accepted,action_indices\n";
  for (const auto& r : episode.records) {
    out << r.step << ',' << format_double(r.energy) << ',' << format_double(r.reward) << ','
        << (r.accepted ? 1 : 0) << ',';
    for (std::size_t k = 0; k < r.action.indices.size(); ++k)
      out << (k ? ";" : "") << r.action.indices[k];
    out << '\n';
  }
}

}  // namespace rlqls
