#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "rlqls/error.hpp"
#include "rlqls/io.hpp"
#include "rlqls/trainer.hpp"
#include "test_support.hpp"

namespace rlqls {
namespace {

ProblemPool tiny_pool(std::size_t n, std::size_t count, std::uint64_t seed) {
  InstanceSet set = generate_set(n, count, seed, "pool");
  for (auto& p : set.problems) annotate_gse(p, GseMethod::kExhaustive, 0);
  return make_pool(std::move(set));
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.n = 6;
  cfg.m = 2;
  cfg.hidden = {16, 8};
  cfg.episodes_per_iteration = 6;
  cfg.episode_len = 10;
  cfg.learner_batch = 3;
  cfg.iterations = 4;
  cfg.seed = 21;
  return cfg;
}

void perturb(NetParams& p, Rng& rng, double scale) {
  for (double& v : p.flat()) v += scale * (2.0 * rng.uniform() - 1.0);
}

TEST(Collect, SingleStepEpisode) {
  auto cfg = tiny_config();
  cfg.episode_len = 1;
  const auto pool = tiny_pool(6, 3, 1);
  const auto tr = collect(0, initial_params(cfg), pool, cfg, 0);
  ASSERT_EQ(tr.steps.size(), 1u);
  EXPECT_TRUE(tr.steps[0].done);
}

TEST(Collect, DeterministicForSameKey) {
  const auto cfg = tiny_config();
  const auto pool = tiny_pool(6, 3, 2);
  const auto params = initial_params(cfg);
  const auto a = collect(0, params, pool, cfg, 77);
  const auto b = collect(0, params, pool, cfg, 77);
  EXPECT_EQ(a.problem_id, b.problem_id);
  ASSERT_EQ(a.steps.size(), b.steps.size());
  for (std::size_t t = 0; t < a.steps.size(); ++t) {
    EXPECT_EQ(a.steps[t].action, b.steps[t].action);
    EXPECT_EQ(a.steps[t].behavior_log_prob, b.steps[t].behavior_log_prob);
    EXPECT_EQ(a.steps[t].reward, b.steps[t].reward);
  }
  EXPECT_EQ(a.bootstrap_value, b.bootstrap_value);
}

TEST(Collect, BehaviorLogProbIsRecomputable) {
  const auto cfg = tiny_config();
  const auto pool = tiny_pool(6, 3, 3);
  const auto params = initial_params(cfg);
  const auto tr = collect(0, params, pool, cfg, 5);
  for (const auto& st : tr.steps) {
    const auto out = forward(params, encode(AgentState{tr.graph, st.current, st.previous, 0, 0}));
    EXPECT_NEAR(log_prob_of(out, st.action), st.behavior_log_prob, 1e-12);
  }
}

TEST(Loss, OnPolicyRatiosAreOne) {
  const auto cfg = tiny_config();
  const auto pool = tiny_pool(6, 3, 4);
  const auto params = initial_params(cfg);
  std::vector<Trajectory> batch;
  for (std::uint64_t k = 0; k < 4; ++k) batch.push_back(collect(0, params, pool, cfg, k));
  const auto loss = compute_loss(params, batch, cfg.loss);
  EXPECT_NEAR(loss.mean_rho, 1.0, 1e-12);
  EXPECT_EQ(loss.steps, 40u);
}

// N = 4 net whose value depends only on spin 0 of the current config and
// whose logits are the policy-head bias.
struct HandNet {
  NetParams params;
  std::vector<double> bias{0.2, -0.4, 1.0, 0.0};
  double w = 2.0, b = 0.5;

  HandNet() : params(Architecture{encoded_size(4), {2}, 4, "tanh"}) {
    params.weight(0)(0, 10) = 1.0;  // current[0]
    params.weight(params.value_slot())(0, 0) = w;
    params.bias(params.value_slot())(0) = b;
    for (std::size_t k = 0; k < 4; ++k) params.bias(params.policy_slot())(k) = bias[k];
  }
  double value(double s0) const { return w * std::tanh(s0) + b; }
};

Trajectory single_step(double reward, double log_mu, bool done) {
  Rng rng(1);
  auto p = generate_instance(4, rng);
  Trajectory tr;
  tr.problem_id = p.id();
  tr.graph = make_graph_features(p);
  TrajectoryStep st;
  st.current = SpinConfig({1, -1, 1, 1});
  st.previous = SpinConfig({1, 1, 1, 1});
  st.action = ActionChoice{{2, 0}};
  st.behavior_log_prob = log_mu;
  st.reward = reward;
  st.done = done;
  tr.steps.push_back(st);
  tr.final_current = SpinConfig({-1, -1, 1, 1});
  tr.final_previous = st.current;
  return tr;
}

TEST(Loss, HandComputedSingleStep) {
  const HandNet net;
  // log pi of the ordered pair (2, 0) under logits (0.2, -0.4, 1.0, 0.0).
  const double z = std::exp(0.2) + std::exp(-0.4) + std::exp(1.0) + std::exp(0.0);
  const double log_pi = (1.0 - std::log(z)) + (0.2 - std::log(z - std::exp(1.0)));
  double entropy = 0.0;
  for (double l : net.bias) entropy -= std::exp(l) / z * (l - std::log(z));

  LossConfig cfg;
  cfg.discount = 0.9;
  cfg.value_weight = 0.5;
  cfg.entropy_weight = 0.01;
  const double reward = 0.93;
  const double v = net.value(1.0), v_next = net.value(-1.0);

  struct Case {
    double log_mu;
    bool done;
  };
  for (const Case c : {Case{log_pi + 0.3, false}, Case{log_pi - 0.5, false}, Case{log_pi + 0.3, true}}) {
    const double ratio = std::exp(log_pi - c.log_mu);
    const double rho = std::min(1.0, ratio);
    const double delta = reward + (c.done ? 0.0 : 0.9 * v_next) - v;
    const double policy = -rho * delta * log_pi;
    const double value = 0.5 * 0.5 * delta * delta;
    const double ent = -0.01 * entropy;

    const std::vector<Trajectory> batch{single_step(reward, c.log_mu, c.done)};
    const auto loss = compute_loss(net.params, batch, cfg);
    EXPECT_NEAR(loss.policy, policy, 1e-10);
    EXPECT_NEAR(loss.value, value, 1e-10);
    EXPECT_NEAR(loss.entropy, ent, 1e-10);
    EXPECT_NEAR(loss.total, policy + value + ent, 1e-10);
    EXPECT_NEAR(loss.mean_rho, ratio, 1e-12);
  }
}

TEST(Loss, ZeroRewardsAndZeroNetLeaveOnlyEntropy) {
  NetParams params(Architecture{encoded_size(4), {3}, 4, "tanh"});
  auto tr = single_step(0.0, -std::log(12.0), false);
  tr.steps.push_back(tr.steps[0]);
  tr.steps[1].done = true;
  const std::vector<Trajectory> batch{tr};
  const auto loss = compute_loss(params, batch, LossConfig{});
  EXPECT_EQ(loss.policy, 0.0);
  EXPECT_EQ(loss.value, 0.0);
  EXPECT_NEAR(loss.total, -0.01 * 2 * std::log(4.0), 1e-15);
}

TEST(Loss, AveragesOverTrajectories) {
  const HandNet net;
  const auto a = single_step(0.5, -2.0, false);
  const auto b = single_step(0.9, -2.5, true);
  const LossConfig cfg;
  const auto la = compute_loss(net.params, std::vector<Trajectory>{a}, cfg);
  const auto lb = compute_loss(net.params, std::vector<Trajectory>{b}, cfg);
  const auto both = compute_loss(net.params, std::vector<Trajectory>{a, b}, cfg);
  EXPECT_NEAR(both.total, 0.5 * (la.total + lb.total), 1e-14);
  for (std::size_t k = 0; k < both.gradient.size(); ++k)
    EXPECT_NEAR(both.gradient[k], 0.5 * (la.gradient[k] + lb.gradient[k]), 1e-14);
}

TEST(Loss, GradientMatchesFiniteDifferencesOnMicroConfig) {
  TrainConfig cfg;
  cfg.n = 4;
  cfg.m = 2;
  cfg.hidden = {6, 5};
  cfg.episode_len = 4;
  cfg.seed = 3;
  const auto pool = tiny_pool(4, 2, 5);
  const NetParams behavior = initial_params(cfg);
  std::vector<Trajectory> batch{collect(0, behavior, pool, cfg, 0), collect(0, behavior, pool, cfg, 1)};

  NetParams theta = behavior;
  Rng rng(9);
  perturb(theta, rng, 0.05);

  const auto loss = compute_loss(theta, batch, cfg.loss, &theta);
  const auto plain = compute_loss(theta, batch, cfg.loss);
  EXPECT_EQ(loss.gradient, plain.gradient);

  double worst = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    NetParams up = theta, dn = theta;
    up.flat()[k] += 1e-5;
    dn.flat()[k] -= 1e-5;
    const double fd = (compute_loss(up, batch, cfg.loss, &theta).total -
                       compute_loss(dn, batch, cfg.loss, &theta).total) / 2e-5;
    const double g = loss.gradient[k];
    worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-8}));
  }
  EXPECT_LE(worst, 1e-4);
}

TEST(Loss, EmptyBatchIsContractError) {
  const HandNet net;
  EXPECT_THROW(compute_loss(net.params, std::span<const Trajectory>{}, LossConfig{}), ContractError);
}

TEST(Loss, NonFiniteLossNamesTheProblem) {
  const HandNet net;
  auto tr = single_step(std::numeric_limits<double>::infinity(), -2.0, true);
  try {
    compute_loss(net.params, std::vector<Trajectory>{tr}, LossConfig{});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find(tr.problem_id), std::string::npos);
  }
}

TEST(Learner, ZeroIterationsReturnsInitialParams) {
  auto cfg = tiny_config();
  cfg.iterations = 0;
  const auto result = learner_loop(cfg, tiny_pool(6, 2, 6));
  EXPECT_TRUE(result.log.empty());
  const auto init = initial_params(cfg);
  EXPECT_TRUE(std::equal(init.flat().begin(), init.flat().end(), result.params.flat().begin()));
  EXPECT_EQ(result.params.version, 0u);
}

TEST(Learner, VersionIncreasesByOnePerIteration) {
  const auto cfg = tiny_config();
  std::vector<std::uint64_t> versions;
  const auto result = learner_loop(cfg, tiny_pool(6, 3, 7), [&](const TrainLogRecord& r) {
    versions.push_back(r.version);
  });
  EXPECT_EQ(versions, (std::vector<std::uint64_t>{1, 2, 3, 4}));
  EXPECT_EQ(result.log.size(), 4u);
  EXPECT_EQ(result.params.version, 4u);
  for (const auto& r : result.log) EXPECT_EQ(r.mean_version_lag, 0.0);
}

TEST(Learner, SingleActorRunsAreBitIdentical) {
  const auto pool = tiny_pool(6, 3, 8);
  auto cfg = tiny_config();
  cfg.out_dir = (testing::scratch_dir("det_a")).string();
  const auto a = learner_loop(cfg, pool);
  cfg.out_dir = (testing::scratch_dir("det_b")).string();
  const auto b = learner_loop(cfg, pool);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t k = 0; k < a.params.size(); ++k)
    ASSERT_EQ(std::bit_cast<std::uint64_t>(a.params.flat()[k]), std::bit_cast<std::uint64_t>(b.params.flat()[k]));
  const auto root = std::filesystem::temp_directory_path();
  const auto log_a = read_text_file(root / "rlqls_test_det_a" / "train_log.csv");
  EXPECT_EQ(log_a, read_text_file(root / "rlqls_test_det_b" / "train_log.csv"));
  EXPECT_EQ(std::count(log_a.begin(), log_a.end(), '\n'), 5);
  EXPECT_TRUE(std::filesystem::exists(root / "rlqls_test_det_a" / "ckpt_0.json"));
  EXPECT_TRUE(std::filesystem::exists(root / "rlqls_test_det_a" / "ckpt_4.json"));
}

TEST(Learner, DifferentSeedsDiverge) {
  const auto pool = tiny_pool(6, 3, 9);
  auto cfg = tiny_config();
  const auto a = learner_loop(cfg, pool);
  cfg.seed += 1;
  const auto b = learner_loop(cfg, pool);
  EXPECT_NE(train_log_row(a.log.back()), train_log_row(b.log.back()));
}

TEST(Learner, MultipleActorsFeedTheLearner) {
  auto cfg = tiny_config();
  cfg.actors = 3;
  cfg.iterations = 5;
  const auto result = learner_loop(cfg, tiny_pool(6, 3, 10));
  ASSERT_EQ(result.log.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(result.log[i].version, i + 1);
    EXPECT_GE(result.log[i].mean_version_lag, 0.0);
    EXPECT_TRUE(std::isfinite(result.log[i].policy_loss));
  }
}

TEST(Learner, PoolWithoutReferenceIsRejected) {
  Rng rng(1);
  ProblemPool pool{std::make_shared<const IsingProblem>(generate_instance(6, rng))};
  EXPECT_THROW(learner_loop(tiny_config(), pool), ConfigError);
}

TEST(Learner, PeriodicEvalWritesLog) {
  auto cfg = tiny_config();
  cfg.eval_every = 2;
  cfg.eval_count = 2;
  cfg.checkpoint_every = 2;
  const auto dir = testing::scratch_dir("peval");
  cfg.out_dir = dir.string();
  learner_loop(cfg, tiny_pool(6, 3, 11));
  const auto text = read_text_file(dir / "eval_log.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_TRUE(std::filesystem::exists(dir / "ckpt_2.json"));
}

}  // namespace
}  // namespace rlqls
