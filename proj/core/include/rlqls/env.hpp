#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "rlqls/ising.hpp"
#include "rlqls/rng.hpp"
#include "rlqls/subproblem.hpp"

namespace rlqls {

/// Ordered list of m distinct variable indices selecting a sub-problem.
struct ActionChoice {
  std::vector<std::size_t> indices;
  friend bool operator==(const ActionChoice&, const ActionChoice&) = default;
};

using GraphFeatures = std::shared_ptr<const std::vector<double>>;

/// J_ij upper triangle in (i, j)-sorted order followed by h_0..h_{n-1}.
GraphFeatures make_graph_features(const IsingProblem& problem);

/// s = (G, current, previous). The graph block is shared and never mutated.
struct AgentState {
  GraphFeatures graph;
  SpinConfig current;
  SpinConfig previous;
  double energy = 0.0;  // energy(problem, current)
  std::size_t t = 0;    // steps taken in this episode
};

struct EnvConfig {
  std::size_t m = 5;
  std::size_t episode_len = 200;
  // Metropolis inverse temperature. Unset means 100 / |gse_ref|.
  std::optional<double> gamma_accept;
  std::uint64_t seed = 0;
};

struct StepRecord {
  std::size_t step = 0;  // 1-based
  ActionChoice action;
  double behavior_log_prob = 0.0;
  double reward = 0.0;
  double energy = 0.0;       // energy of the config after the acceptance decision
  double best_energy = 0.0;  // best-so-far within the episode
  double delta_energy = 0.0; // E_new - E_old of the candidate
  bool accepted = false;
  bool done = false;
};

struct Transition {
  AgentState next;
  double reward = 0.0;
  StepRecord info;
};

/// Solves a clamped sub-problem. The rng is there for stochastic solvers.
using SubSolver = std::function<SubSolution(const SubProblem&, Rng&)>;

SubSolution exact_sub_solver(const SubProblem& sub, Rng& rng);

/// Accept when delta < 0, otherwise with probability exp(-gamma * delta)
/// using one uniform draw.
bool metropolis_accept(double delta, double gamma, Rng& rng);

/// Quantum-local-search MDP on one problem instance.
class QlsEnv {
 public:
  /// Throws ConfigError when the problem has no gse_ref.
  QlsEnv(std::shared_ptr<const IsingProblem> problem, EnvConfig cfg,
         SubSolver solver = exact_sub_solver);

  /// Uniform random spins; previous = current.
  AgentState reset(Rng& init_rng) const;

  /// Sub-solve, Metropolis test, reward = energy / gse.
  Transition step(const AgentState& state, const ActionChoice& action, Rng& accept_rng);

  const IsingProblem& problem() const { return *problem_; }
  const std::shared_ptr<const IsingProblem>& problem_ptr() const { return problem_; }
  const EnvConfig& config() const { return cfg_; }
  const GraphFeatures& graph() const { return graph_; }
  double gamma() const { return gamma_; }
  double gse() const { return gse_; }
  /// True once a trial energy undercut a heuristic gse_ref.
  bool gse_refined() const { return gse_refined_; }

 private:
  std::shared_ptr<const IsingProblem> problem_;
  EnvConfig cfg_;
  SubSolver solver_;
  GraphFeatures graph_;
  double gse_ = 0.0;
  GseProvenance provenance_ = GseProvenance::kExhaustive;
  double gamma_ = 1.0;
  bool gse_refined_ = false;
};

void validate_action(const ActionChoice& action, std::size_t n, std::size_t m);

/// A selection policy maps a state to an action and its log-probability.
using Policy = std::function<std::pair<ActionChoice, double>(const AgentState&, Rng&)>;

/// m distinct indices uniformly without replacement, in draw order.
std::pair<ActionChoice, double> random_policy(const AgentState& state, std::size_t m, Rng& rng);

Policy make_random_policy(std::size_t m);

/// Independent streams for one episode.
struct EpisodeStreams {
  Rng init;
  Rng policy;
  Rng accept;

  static EpisodeStreams derive(std::uint64_t seed, std::uint64_t episode_key,
                               std::uint64_t policy_key = 0);
};

struct EpisodeResult {
  std::vector<StepRecord> records;
  double initial_energy = 0.0;
  double episode_return = 0.0;  // undiscounted reward sum
  double best_energy = 0.0;
  SpinConfig best_config;
};

EpisodeResult run_episode(QlsEnv& env, const Policy& policy, EpisodeStreams& streams);

/// step, energy, reward, accepted, action_indices (semicolon-joined)
void write_trace_csv(std::ostream& out, const EpisodeResult& episode);

}  // namespace rlqls
