#include "rlqls/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "rlqls/channel.hpp"
#include "rlqls/error.hpp"
#include "rlqls/io.hpp"

namespace rlqls {

ProblemPool make_pool(InstanceSet set) {
  ProblemPool pool;
  pool.reserve(set.problems.size());
  for (auto& p : set.problems) pool.push_back(std::make_shared<const IsingProblem>(std::move(p)));
  return pool;
}

NetParams initial_params(const TrainConfig& cfg) {
  Rng rng(cfg.seed, "init-params");
  return NetParams::initialize(default_architecture(cfg.n, cfg.hidden), rng);
}

Trajectory collect(std::size_t actor_id, const NetParams& snapshot, const ProblemPool& pool,
                   const TrainConfig& cfg, std::uint64_t episode_key) {
  RLQLS_REQUIRE(!pool.empty(), "problem pool is empty");
  Rng pick(cfg.seed, "pick", {episode_key});
  const auto& problem = pool[static_cast<std::size_t>(pick.below(pool.size()))];
  RLQLS_REQUIRE(snapshot.arch().n_actions == problem->n(),
                "snapshot was built for a different problem size");

  EnvConfig env_cfg{cfg.m, cfg.episode_len, std::nullopt, cfg.seed};
  QlsEnv env(problem, env_cfg);
  EpisodeStreams streams = EpisodeStreams::derive(cfg.seed, episode_key);

  Trajectory traj;
  traj.problem_id = problem->id();
  traj.graph = env.graph();
  traj.behavior_version = snapshot.version;
  traj.actor_id = actor_id;
  traj.steps.reserve(cfg.episode_len);

  AgentState state = env.reset(streams.init);
  double best = state.energy;
  std::vector<double> features(encoded_size(problem->n()));
  for (std::size_t t = 0; t < cfg.episode_len; ++t) {
    encode_into(*state.graph, state.current, state.previous, features);
    const PolicyOutput out = forward(snapshot, features);
    auto [action, log_prob] = sample_action(out, cfg.m, streams.policy);
    Transition tr = env.step(state, action, streams.accept);
    best = std::min(best, tr.next.energy);
    traj.steps.push_back({state.current, state.previous, std::move(action), log_prob, tr.reward,
                          tr.next.energy, tr.info.done});
    traj.episode_return += tr.reward;
    state = std::move(tr.next);
  }
  traj.final_current = state.current;
  traj.final_previous = state.previous;
  traj.final_ratio = state.energy / env.gse();
  traj.best_ratio = best / env.gse();
  encode_into(*state.graph, state.current, state.previous, features);
  traj.bootstrap_value = forward(snapshot, features).value;
  return traj;
}

LossResult compute_loss(const NetParams& theta, std::span<const Trajectory> batch,
                        const LossConfig& cfg, const NetParams* coefficients) {
  RLQLS_REQUIRE(!batch.empty(), "compute_loss needs a non-empty batch");
  if (coefficients) {
    RLQLS_REQUIRE(coefficients->arch() == theta.arch(), "coefficient network has another shape");
  }
  const std::size_t input = theta.arch().input;
  const std::size_t n_out = theta.arch().n_actions;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());

  LossResult res;
  res.gradient.assign(theta.size(), 0.0);
  double rho_sum = 0.0;

  // Bound the activation memory of one forward pass.
  constexpr std::size_t kMaxChunkEntries = std::size_t{1} << 22;
  std::size_t begin = 0;
  while (begin < batch.size()) {
    std::size_t end = begin;
    std::size_t rows = 0;
    do {
      rows += batch[end].steps.size() + 1;
      ++end;
    } while (end < batch.size() && (rows + batch[end].steps.size() + 1) * input <= kMaxChunkEntries);

    RowMatrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(input));
    std::size_t r = 0;
    for (std::size_t b = begin; b < end; ++b) {
      const Trajectory& tr = batch[b];
      RLQLS_REQUIRE(!tr.steps.empty() && tr.graph, "trajectory '" + tr.problem_id + "' is empty");
      for (const auto& st : tr.steps)
        encode_into(*tr.graph, st.current, st.previous, {x.row(r++).data(), input});
      encode_into(*tr.graph, tr.final_current, tr.final_previous, {x.row(r++).data(), input});
    }

    const ForwardCache cache = forward_batch(theta, x);
    std::optional<ForwardCache> coeff_cache;
    if (coefficients) coeff_cache = forward_batch(*coefficients, x);
    const ForwardCache& cc = coeff_cache ? *coeff_cache : cache;

    RowMatrix g_logits = RowMatrix::Zero(static_cast<Eigen::Index>(rows),
                                         static_cast<Eigen::Index>(n_out));
    Eigen::VectorXd g_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));

    r = 0;
    for (std::size_t b = begin; b < end; ++b) {
      const Trajectory& tr = batch[b];
      double policy = 0.0, value = 0.0, entropy = 0.0;
      for (std::size_t t = 0; t < tr.steps.size(); ++t, ++r) {
        const TrajectoryStep& st = tr.steps[t];
        const std::span<const double> logits(cache.logits.row(r).data(), n_out);
        const std::span<const double> coeff_logits(cc.logits.row(r).data(), n_out);

        const double rho_raw = std::exp(log_prob_of(coeff_logits, st.action) - st.behavior_log_prob);
        const double rho = std::min(cfg.rho_clip, rho_raw);
        rho_sum += rho_raw;

        const double next_value = st.done ? 0.0 : cfg.discount * cc.values(r + 1);
        const double target = cfg.reward_scale * st.reward + next_value;
        const double delta = target - cc.values(r);

        const double log_pi = log_prob_of(logits, st.action);
        const double v = cache.values(r);
        const double h = first_draw_entropy(logits);
        policy += -rho * delta * log_pi;
        value += cfg.value_weight * 0.5 * (target - v) * (target - v);
        entropy += -cfg.entropy_weight * h;

        const std::span<double> g_row(g_logits.row(r).data(), n_out);
        add_log_prob_grad(logits, st.action, -rho * delta * inv_batch, g_row);
        add_entropy_grad(logits, -cfg.entropy_weight * inv_batch, g_row);
        g_values(r) = -cfg.value_weight * (target - v) * inv_batch;
      }
      ++r;  // bootstrap row carries no gradient
      if (!std::isfinite(policy) || !std::isfinite(value) || !std::isfinite(entropy)) {
        throw TrainingError("non-finite loss on trajectory for problem '" + tr.problem_id +
                            "' (actor " + std::to_string(tr.actor_id) + ", behavior version " +
                            std::to_string(tr.behavior_version) + ")");
      }
      res.policy += policy;
      res.value += value;
      res.entropy += entropy;
      res.steps += tr.steps.size();
    }
    backward_batch(theta, cache, g_logits, g_values, res.gradient);
    begin = end;
  }

  res.policy *= inv_batch;
  res.value *= inv_batch;
  res.entropy *= inv_batch;
  res.total = res.policy + res.value + res.entropy;
  res.mean_rho = rho_sum / static_cast<double>(res.steps);
  return res;
}

std::string train_log_header() {
  return "iteration,mean_return,mean_approx_ratio,best_approx_ratio,policy_loss,value_loss,"
         "entropy,mean_rho,version,version_lag\n";
}

std::string train_log_row(const TrainLogRecord& r) {
  std::ostringstream os;
  os << r.iteration << ',' << format_double(r.mean_return) << ','
     << format_double(r.mean_approx_ratio) << ',' << format_double(r.best_approx_ratio) << ','
     << format_double(r.policy_loss) << ',' << format_double(r.value_loss) << ','
     << format_double(r.entropy) << ',' << format_double(r.mean_rho) << ',' << r.version << ','
     << format_double(r.mean_version_lag) << '\n';
  return os.str();
}

namespace {

void validate(const TrainConfig& cfg, const ProblemPool& pool) {
  RLQLS_REQUIRE(!pool.empty(), "training pool is empty");
  for (const auto& p : pool) {
    RLQLS_REQUIRE(p->n() == cfg.n, "training problem '" + p->id() + "' has the wrong size");
    if (!p->gse_ref()) throw ConfigError("training problem '" + p->id() + "' has no gse_ref");
  }
  RLQLS_REQUIRE(cfg.m >= 1 && cfg.m <= cfg.n, "m must satisfy 1 <= m <= n");
  RLQLS_REQUIRE(cfg.episodes_per_iteration >= 1, "episodes_per_iteration must be positive");
  RLQLS_REQUIRE(cfg.episode_len >= 1, "episode_len must be positive");
  RLQLS_REQUIRE(cfg.loss.discount >= 0.0 && cfg.loss.discount <= 1.0, "discount must lie in [0, 1]");
  RLQLS_REQUIRE(cfg.loss.rho_clip > 0.0, "rho_clip must be positive");
}

// Accumulates minibatch updates for one iteration.
class IterationLearner {
 public:
  IterationLearner(NetParams& params, RmsPropState& opt, const TrainConfig& cfg)
      : params_(params), opt_(opt), cfg_(cfg) {}

  void learn(std::vector<Trajectory>& batch) {
    if (batch.empty()) return;
    const LossResult loss = compute_loss(params_, batch, cfg_.loss);
    optimizer_step(params_, loss.gradient, opt_, cfg_.optimizer);
    const auto k = static_cast<double>(batch.size());
    policy_ += loss.policy * k;
    value_ += loss.value * k;
    entropy_ += loss.entropy * k;
    rho_ += loss.mean_rho * static_cast<double>(loss.steps);
    steps_ += loss.steps;
    for (const auto& tr : batch) {
      returns_ += tr.episode_return;
      ratios_ += tr.final_ratio;
      best_ = std::max(best_, tr.best_ratio);
      lag_ += static_cast<double>(params_.version - tr.behavior_version);
      ++count_;
    }
    batch.clear();
  }

  TrainLogRecord record(std::size_t iteration) const {
    const auto k = static_cast<double>(count_);
    TrainLogRecord r;
    r.iteration = iteration;
    r.mean_return = returns_ / k;
    r.mean_approx_ratio = ratios_ / k;
    r.best_approx_ratio = best_;
    r.policy_loss = policy_ / k;
    r.value_loss = value_ / k;
    r.entropy = entropy_ / k;
    r.mean_rho = rho_ / static_cast<double>(steps_);
    r.mean_version_lag = lag_ / k;
    return r;
  }

 private:
  NetParams& params_;
  RmsPropState& opt_;
  const TrainConfig& cfg_;
  double policy_ = 0.0, value_ = 0.0, entropy_ = 0.0, rho_ = 0.0;
  double returns_ = 0.0, ratios_ = 0.0, best_ = -1e300, lag_ = 0.0;
  std::size_t steps_ = 0, count_ = 0;
};

// Fixed held-out problems scored with the current snapshot.
class PeriodicEval {
 public:
  explicit PeriodicEval(const TrainConfig& cfg) : cfg_(cfg) {
    InstanceSet set = generate_set(cfg.n, cfg.eval_count, derive_seed(cfg.seed, "eval-set"), "eval");
    for (auto& p : set.problems) annotate_gse(p, GseMethod::kAuto, cfg.seed);
    pool_ = make_pool(std::move(set));
  }

  double mean_best_ratio(const NetParams& params) const {
    auto snapshot = std::make_shared<const NetParams>(params);
    const Policy policy = make_net_policy(snapshot, cfg_.m);
    double sum = 0.0;
    for (std::size_t i = 0; i < pool_.size(); ++i) {
      QlsEnv env(pool_[i], EnvConfig{cfg_.m, cfg_.episode_len, std::nullopt, cfg_.seed});
      EpisodeStreams streams = EpisodeStreams::derive(derive_seed(cfg_.seed, "eval-episodes"), i);
      sum += run_episode(env, policy, streams).best_energy / env.gse();
    }
    return sum / static_cast<double>(pool_.size());
  }

 private:
  const TrainConfig& cfg_;
  ProblemPool pool_;
};

struct ActorItem {
  std::optional<Trajectory> trajectory;
  std::string error;
};

}  // namespace

TrainResult learner_loop(const TrainConfig& cfg, const ProblemPool& pool,
                         const std::function<void(const TrainLogRecord&)>& on_iteration) {
  validate(cfg, pool);
  TrainResult result{initial_params(cfg), {}};
  NetParams& params = result.params;
  RmsPropState opt;

  const std::filesystem::path out = cfg.out_dir;
  std::ofstream log_file, timing_file, eval_file;
  auto checkpoint = [&](std::size_t iteration) {
    if (!out.empty())
      save_checkpoint(out / ("ckpt_" + std::to_string(iteration) + ".json"),
                      Checkpoint{params, cfg.n, cfg.m});
  };
  if (!out.empty()) {
    std::filesystem::create_directories(out);
    log_file.open(out / "train_log.csv", std::ios::binary | std::ios::trunc);
    timing_file.open(out / "timing.csv", std::ios::binary | std::ios::trunc);
    log_file << train_log_header() << std::flush;
    timing_file << "iteration,seconds\n" << std::flush;
  }
  checkpoint(0);
  if (cfg.iterations == 0) return result;

  std::optional<PeriodicEval> evaluator;
  if (cfg.eval_every > 0) {
    evaluator.emplace(cfg);
    if (!out.empty()) {
      eval_file.open(out / "eval_log.csv", std::ios::binary | std::ios::trunc);
      eval_file << "iteration,mean_best_ratio\n" << std::flush;
    }
  }

  const std::size_t per_iter = cfg.episodes_per_iteration;
  const std::size_t batch_size =
      cfg.learner_batch ? std::min(cfg.learner_batch, per_iter) : per_iter;

  std::mutex snapshot_mutex;
  auto snapshot = std::make_shared<const NetParams>(params);
  auto current_snapshot = [&] {
    std::lock_guard lock(snapshot_mutex);
    return snapshot;
  };

  // Actor pool, used only when more than one actor is requested.
  const bool threaded = cfg.actors > 1;
  BoundedChannel<ActorItem> channel(2 * per_iter);
  std::atomic<bool> stop{false};
  std::vector<std::thread> actors;
  struct Joiner {
    std::atomic<bool>& stop;
    BoundedChannel<ActorItem>& channel;
    std::vector<std::thread>& threads;
    ~Joiner() {
      stop = true;
      channel.close();
      for (auto& t : threads)
        if (t.joinable()) t.join();
    }
  } joiner{stop, channel, actors};
  if (threaded) {
    for (std::size_t a = 0; a < cfg.actors; ++a) {
      actors.emplace_back([&, a] {
        std::uint64_t counter = 0;
        while (!stop) {
          ActorItem item;
          try {
            const auto snap = current_snapshot();
            item.trajectory =
                collect(a, *snap, pool, cfg, (std::uint64_t{a + 1} << 40) | counter++);
          } catch (const std::exception& e) {
            item.error = "actor " + std::to_string(a) + ": " + e.what();
          }
          if (!channel.push(std::move(item))) break;
        }
      });
    }
  }

  std::size_t failures = 0;
  auto record_failure = [&](const std::string& what) {
    if (++failures > cfg.max_actor_failures) {
      throw TrainingError("aborting after " + std::to_string(failures) +
                          " failed episodes; last error: " + what);
    }
  };

  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationLearner learner(params, opt, cfg);
    std::vector<Trajectory> pending;
    pending.reserve(batch_size);

    if (threaded) {
      std::size_t got = 0;
      while (got < per_iter) {
        auto item = channel.pop();
        if (!item) throw TrainingError("actor channel closed unexpectedly");
        if (!item->trajectory) {
          record_failure(item->error);
          continue;
        }
        pending.push_back(std::move(*item->trajectory));
        ++got;
        if (pending.size() == batch_size || got == per_iter) learner.learn(pending);
      }
    } else {
      // Every trajectory of the iteration comes from the snapshot published
      // at its start; later minibatches are therefore off-policy.
      std::vector<Trajectory> all;
      all.reserve(per_iter);
      for (std::size_t e = 0; e < per_iter; ++e) {
        for (std::uint64_t attempt = 0;; ++attempt) {
          const std::uint64_t key = ((it - 1) * per_iter + e) | (attempt << 48);
          try {
            all.push_back(collect(0, *snapshot, pool, cfg, key));
            break;
          } catch (const TrainingError&) {
            throw;
          } catch (const std::exception& ex) {
            record_failure(ex.what());
          }
        }
      }
      for (auto& tr : all) {
        pending.push_back(std::move(tr));
        if (pending.size() == batch_size) learner.learn(pending);
      }
      learner.learn(pending);
    }

    params.version += 1;
    {
      auto next = std::make_shared<const NetParams>(params);
      std::lock_guard lock(snapshot_mutex);
      snapshot = std::move(next);
    }

    TrainLogRecord rec = learner.record(it);
    rec.version = params.version;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(rec);
    if (log_file.is_open()) {
      log_file << train_log_row(rec) << std::flush;
      timing_file << it << ',' << format_double(rec.seconds) << '\n' << std::flush;
    }
    if (evaluator && it % cfg.eval_every == 0) {
      const double score = evaluator->mean_best_ratio(params);
      if (eval_file.is_open()) eval_file << it << ',' << format_double(score) << '\n' << std::flush;
    }
    if ((cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) || it == cfg.iterations)
      checkpoint(it);
    if (on_iteration) on_iteration(rec);
  }
  return result;
}

}  // namespace rlqls
