#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "rlqls/io.hpp"
#include "rlqls/policy.hpp"
#include "test_support.hpp"

namespace rlqls {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string s(const fs::path& p) { return p.string(); }

TEST(Cli, GenWritesRequestedSet) {
  const auto dir = testing::scratch_dir("cli_gen");
  ASSERT_EQ(cli({"gen", "--n", "4", "--count", "2", "--seed", "7", "--out", s(dir / "a.json")}).code, 0);
  ASSERT_EQ(cli({"gen", "--n", "4", "--count", "2", "--seed", "7", "--out", s(dir / "b.json")}).code, 0);
  EXPECT_EQ(read_text_file(dir / "a.json"), read_text_file(dir / "b.json"));
  const auto set = load_instance_set(dir / "a.json");
  ASSERT_EQ(set.problems.size(), 2u);
  for (const auto& p : set.problems) {
    EXPECT_EQ(p.upper_triangle().size(), 6u);
    EXPECT_FALSE(p.gse_ref().has_value());
  }
}

TEST(Cli, GenLargeSetRoundTrips) {
  const auto dir = testing::scratch_dir("cli_gen_large");
  ASSERT_EQ(cli({"gen", "--n", "32", "--count", "1000", "--seed", "1", "--out", s(dir / "big.json")}).code, 0);
  const auto set = load_instance_set(dir / "big.json");
  EXPECT_EQ(set.problems.size(), 1000u);
  EXPECT_EQ(set.problems[999].upper_triangle().size(), 496u);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"gen", "--count", "2"}).code, 2);
  const auto dir = testing::scratch_dir("cli_usage");
  EXPECT_EQ(cli({"gen", "--n", "1", "--out", s(dir / "x.json")}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, GseOnSinglePair) {
  const auto dir = testing::scratch_dir("cli_gse");
  ASSERT_EQ(cli({"gen", "--n", "2", "--count", "3", "--seed", "2", "--out", s(dir / "p.json")}).code, 0);
  ASSERT_EQ(cli({"gse", "--in", s(dir / "p.json"), "--out", s(dir / "q.json"), "--method", "exhaustive"}).code, 0);
  const auto set = load_instance_set(dir / "q.json");
  for (const auto& p : set.problems) {
    ASSERT_TRUE(p.gse_ref());
    // Fields are present too: the minimum over the four states.
    EXPECT_DOUBLE_EQ(p.gse_ref()->energy, testing::brute_force_min(p));
  }
  ASSERT_EQ(cli({"gse", "--in", s(dir / "q.json"), "--out", s(dir / "r.json"), "--method", "exhaustive"}).code, 0);
  EXPECT_EQ(read_text_file(dir / "q.json"), read_text_file(dir / "r.json"));
}

TEST(Cli, GseOfCouplingOnlyPairIsMinusAbsJ) {
  const auto dir = testing::scratch_dir("cli_gse_pair");
  InstanceSet set;
  set.kind = "test";
  set.problems.push_back(testing::make_problem(2, {0.7}, {0.0, 0.0}, "pair"));
  save_instance_set(dir / "p.json", set);
  ASSERT_EQ(cli({"gse", "--in", s(dir / "p.json")}).code, 0);
  EXPECT_DOUBLE_EQ(load_instance_set(dir / "p.json").problems[0].gse_ref()->energy, -0.7);
}

TEST(Cli, TabuNeverBelowExhaustive) {
  const auto dir = testing::scratch_dir("cli_tabu");
  ASSERT_EQ(cli({"gen", "--n", "12", "--count", "100", "--seed", "3", "--out", s(dir / "p.json")}).code, 0);
  ASSERT_EQ(cli({"gse", "--in", s(dir / "p.json"), "--out", s(dir / "e.json"), "--method", "exhaustive"}).code, 0);
  ASSERT_EQ(cli({"gse", "--in", s(dir / "p.json"), "--out", s(dir / "t.json"), "--method", "tabu"}).code, 0);
  const auto e = load_instance_set(dir / "e.json"), t = load_instance_set(dir / "t.json");
  int equal = 0;
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_GE(t.problems[k].gse_ref()->energy, e.problems[k].gse_ref()->energy - 1e-9);
    equal += std::abs(t.problems[k].gse_ref()->energy - e.problems[k].gse_ref()->energy) <= 1e-9;
  }
  EXPECT_GE(equal, 95);
}

class CliWithInstances : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = testing::scratch_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    ASSERT_EQ(cli({"gen", "--n", "10", "--count", "8", "--seed", "4", "--out", s(dir / "raw.json")}).code, 0);
    ASSERT_EQ(cli({"gse", "--in", s(dir / "raw.json"), "--out", s(dir / "set.json")}).code, 0);
  }
  fs::path dir;
};

TEST_F(CliWithInstances, SolveRejectsZeroSteps) {
  EXPECT_EQ(cli({"solve", "--instances", s(dir / "set.json"), "--m", "4", "--steps", "0", "--out", s(dir / "o")}).code, 2);
}

TEST_F(CliWithInstances, SolveNeedsReference) {
  const auto r = cli({"solve", "--instances", s(dir / "raw.json"), "--m", "4", "--out", s(dir / "o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("gse"), std::string::npos);
}

TEST_F(CliWithInstances, SolveIsReproducible) {
  const std::vector<std::string> base{"solve", "--instances", s(dir / "set.json"), "--m", "4",
                                      "--steps", "300", "--seed", "5", "--out"};
  auto a = base, b = base;
  a.push_back(s(dir / "a"));
  b.push_back(s(dir / "b"));
  ASSERT_EQ(cli(a).code, 0);
  ASSERT_EQ(cli(b).code, 0);
  EXPECT_TRUE(fs::exists(dir / "a" / "resolved_config.json"));
  int traces = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    const auto name = entry.path().filename().string();
    if (name.rfind("trace_", 0) != 0) continue;
    ++traces;
    EXPECT_EQ(read_text_file(entry.path()), read_text_file(dir / "b" / name));
  }
  EXPECT_EQ(traces, 8);
  std::istringstream summary(read_text_file(dir / "a" / "summary.csv"));
  std::string line;
  std::getline(summary, line);
  int at_ground = 0;
  while (std::getline(summary, line)) at_ground += line.substr(line.rfind(',') + 1) == "1";
  EXPECT_GE(at_ground, 1);
}

TEST_F(CliWithInstances, TrainZeroIterationsWritesInitialCheckpointOnly) {
  write_text_file(dir / "t.cfg", "n = 10\nm = 2\nhidden = 8\ntrain_count = 4\niterations = 0\n");
  const auto r = cli({"train", "--config", s(dir / "t.cfg"), "--out", s(dir / "run"), "--quiet"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "run" / "ckpt_0.json"));
  EXPECT_FALSE(fs::exists(dir / "run" / "ckpt_1.json"));
  EXPECT_TRUE(fs::exists(dir / "run" / "resolved_config.json"));
  const auto log = read_text_file(dir / "run" / "train_log.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);
}

TEST_F(CliWithInstances, TrainIsDeterministicAndEvalRuns) {
  write_text_file(dir / "t.cfg",
                  "n = 10\nm = 2\nhidden = 16\ntrain_count = 4\nepisodes_per_iteration = 4\n"
                  "episode_len = 8\niterations = 3\n");
  for (const char* name : {"r1", "r2"}) {
    const auto r = cli({"train", "--config", s(dir / "t.cfg"), "--actors", "1", "--seed", "5",
                        "--out", s(dir / name), "--quiet"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const auto log = read_text_file(dir / "r1" / "train_log.csv");
  EXPECT_EQ(log, read_text_file(dir / "r2" / "train_log.csv"));
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 4);
  EXPECT_EQ(load_checkpoint(dir / "r1" / "ckpt_3.json").params.version, 3u);

  const auto ev = cli({"eval", "--instances", s(dir / "set.json"), "--checkpoint", s(dir / "r1" / "ckpt_3.json"),
                       "--steps", "10", "--out", s(dir / "ev")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("trained - random"), std::string::npos);
}

TEST_F(CliWithInstances, TrainConfigErrorsAreListed) {
  write_text_file(dir / "bad.cfg", "n = 10\nm = 2\nwat = 1\nepisode_len = -3\n");
  const auto r = cli({"train", "--config", s(dir / "bad.cfg"), "--out", s(dir / "run")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("wat"), std::string::npos);
  EXPECT_NE(r.err.find("episode_len"), std::string::npos);
}

TEST_F(CliWithInstances, EvalRejectsSizeMismatch) {
  Rng rng(1);
  save_checkpoint(dir / "c.json", Checkpoint{NetParams::initialize(default_architecture(12, {8}), rng), 12, 3});
  const auto r = cli({"eval", "--instances", s(dir / "set.json"), "--checkpoint", s(dir / "c.json"), "--out", s(dir / "ev")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("n = 12"), std::string::npos);
}

TEST(Cli, UntrainedCheckpointIsIndistinguishableFromRandom) {
  const auto dir = testing::scratch_dir("cli_null");
  ASSERT_EQ(cli({"gen", "--n", "10", "--count", "40", "--seed", "6", "--kind", "test", "--out", s(dir / "raw.json")}).code, 0);
  ASSERT_EQ(cli({"gse", "--in", s(dir / "raw.json"), "--out", s(dir / "set.json")}).code, 0);
  Rng rng(2);
  NetParams params(default_architecture(10, {8}));  // zero weights: uniform logits
  save_checkpoint(dir / "c.json", Checkpoint{params, 10, 3});
  const auto r = cli({"eval", "--instances", s(dir / "set.json"), "--checkpoint", s(dir / "c.json"),
                      "--steps", "20", "--repeats", "2", "--seed", "3", "--out", s(dir / "ev")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("no significant improvement"), std::string::npos) << r.out;
}

}  // namespace
}  // namespace rlqls
