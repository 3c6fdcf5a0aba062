#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlqls/env.hpp"
#include "rlqls/ising.hpp"
#include "rlqls/policy.hpp"

namespace rlqls {

using ProblemPool = std::vector<std::shared_ptr<const IsingProblem>>;

ProblemPool make_pool(InstanceSet set);

/// Coefficients of the importance-weighted actor-critic loss.
struct LossConfig {
  double discount = 0.99;       // Gamma
  double rho_clip = 1.0;        // rho-bar
  double value_weight = 0.5;    // c_v
  double entropy_weight = 0.01; // c_e
  double reward_scale = 1.0;
};

struct TrainConfig {
  // problem family
  std::size_t n = 16;
  std::size_t m = 3;
  std::size_t train_count = 1000;
  std::uint64_t train_seed = 1;
  std::string train_set;  // optional instance file; generated when empty or missing

  // acting
  std::size_t episodes_per_iteration = 100;
  std::size_t episode_len = 200;
  std::size_t actors = 1;

  // learning
  LossConfig loss;
  RmsPropHyper optimizer;
  std::vector<std::size_t> hidden{256, 128};
  std::size_t learner_batch = 0;  // trajectories per optimizer step; 0 = whole iteration
  std::size_t iterations = 100;

  // bookkeeping
  std::size_t eval_every = 0;  // 0 disables periodic evaluation
  std::size_t eval_count = 20;
  std::size_t checkpoint_every = 0;  // 0 = initial and final only
  std::size_t max_actor_failures = 10;
  std::string out_dir;
  std::uint64_t seed = 0;
};

struct TrajectoryStep {
  SpinConfig current;
  SpinConfig previous;
  ActionChoice action;
  double behavior_log_prob = 0.0;
  double reward = 0.0;
  double energy = 0.0;
  bool done = false;
};

/// One episode generated by a behavior snapshot.
struct Trajectory {
  std::string problem_id;
  GraphFeatures graph;
  std::vector<TrajectoryStep> steps;
  SpinConfig final_current;  // s_T
  SpinConfig final_previous;
  std::uint64_t behavior_version = 0;
  double bootstrap_value = 0.0;  // V(s_T) under the behavior snapshot
  double episode_return = 0.0;
  double final_ratio = 0.0;
  double best_ratio = 0.0;
  std::size_t actor_id = 0;
};

/// Runs one episode on a problem drawn uniformly from `pool`, sampling
/// actions from `snapshot`. All randomness derives from (cfg.seed, episode_key).
Trajectory collect(std::size_t actor_id, const NetParams& snapshot, const ProblemPool& pool,
                   const TrainConfig& cfg, std::uint64_t episode_key);

struct LossResult {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;    // the -c_e * H contribution
  double mean_rho = 0.0;   // before clipping
  std::size_t steps = 0;
  std::vector<double> gradient;
};

/// Per step t, with rho_t = min(rho_clip, pi/mu) and
/// delta_t = R_t + Gamma (1 - done_t) V(s_{t+1}) - V(s_t):
///   policy  = -sum rho_t delta_t log pi(a_t | s_t)     (rho, delta held fixed)
///   value   =  c_v sum 1/2 (R_t + Gamma V(s_{t+1}) - V(s_t))^2   (target held fixed)
///   entropy = -c_e sum H(first-draw softmax)
/// Sums are averaged over trajectories. `coefficients`, when given, supplies
/// the parameters used for rho and delta; the gradient is then that of the
/// surrogate at `theta` with those coefficients frozen.
LossResult compute_loss(const NetParams& theta, std::span<const Trajectory> batch,
                        const LossConfig& cfg, const NetParams* coefficients = nullptr);

struct TrainLogRecord {
  std::size_t iteration = 0;
  double mean_return = 0.0;
  double mean_approx_ratio = 0.0;
  double best_approx_ratio = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double mean_rho = 0.0;
  std::uint64_t version = 0;
  double mean_version_lag = 0.0;
  double seconds = 0.0;
};

/// Columns of train_log.csv. Wall-clock goes to timing.csv so that
/// single-actor logs stay byte-identical between runs.
std::string train_log_header();
std::string train_log_row(const TrainLogRecord& r);

struct TrainResult {
  NetParams params;
  std::vector<TrainLogRecord> log;
};

/// Actors generate trajectories into a bounded channel; the learner applies
/// compute_loss + optimizer_step and publishes a new snapshot each iteration.
/// With cfg.actors == 1 acting and learning alternate in one thread and the
/// run is fully deterministic.
TrainResult learner_loop(const TrainConfig& cfg, const ProblemPool& pool,
                         const std::function<void(const TrainLogRecord&)>& on_iteration = {});

/// Initial parameters for a configuration.
NetParams initial_params(const TrainConfig& cfg);

}  // namespace rlqls
