#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "siamuap/io/artifact_io.hpp"
#include "siamuap/io/sequence_io.hpp"

namespace fs = std::filesystem;
using namespace siamuap;
using nlohmann::json;

namespace {

// Runs the built tool quietly and returns its exit status.
int run(const std::string& args) {
  const std::string cmd = std::string("\"") + SIAMUAP_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// One small dataset, model and perturbation shared by the pipeline tests.
class Pipeline : public ::testing::Test {
 protected:
  static fs::path root() { return fs::temp_directory_path() / ("siamuap_cli_" + std::to_string(::getpid())); }
  static std::string at(const char* sub) { return (root() / sub).string(); }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    ok_ = run("make-synthetic --sequences 2 --frames 6 --seed 3 --out " + at("data")) == 0 &&
          run("pretrain-tracker --data " + at("data") + " --steps 3 --batch 2 --out " + at("pre")) == 0 &&
          run("train-attack --data " + at("data") + " --model " + at("pre/model") +
              " --iterations 3 --batch 2 --out " + at("train")) == 0;
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  void SetUp() override { ASSERT_TRUE(ok_) << "pipeline setup failed"; }

  static inline bool ok_ = false;
};

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) { EXPECT_EQ(run(""), 2); }

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(run("make-synthetic --bogus 1 --out /tmp/x"), 2);
  EXPECT_EQ(run("--patch-size 48 make-synthetic --out /tmp/x"), 2);
}

TEST(Cli, MissingOutIsUsageError) { EXPECT_EQ(run("make-synthetic --sequences 1"), 2); }

TEST(Cli, HelpSucceeds) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Pipeline, ArtifactsAndManifests) {
  EXPECT_EQ(io::load_dataset(at("data")).size(), 2u);
  const json manifest = io::read_json(root() / "train" / "config.json");
  EXPECT_EQ(manifest.at("command").get<std::string>(), "train-attack");
  EXPECT_EQ(manifest.at("config").at("iterations").get<long>(), 3);
  EXPECT_NO_THROW(io::load_perturbation<float>(root() / "train" / "perturbation"));
  EXPECT_TRUE(fs::exists(root() / "train" / "train_log.csv"));
  EXPECT_TRUE(fs::exists(root() / "train" / "checkpoints"));
}

TEST_F(Pipeline, AttackEvalReport) {
  ASSERT_EQ(run("attack --data " + at("data") + " --model " + at("pre/model") + " --perturbation " +
                at("train/perturbation") + " --reinit --out " + at("attack")),
            0);
  const auto names = io::load_dataset(at("data"));
  for (const auto& s : names) {
    EXPECT_EQ(io::read_trajectory(root() / "attack" / "trajectories" / (s.name + ".txt")).size(), s.length());
  }
  ASSERT_EQ(run("eval --data " + at("data") + " --pred " + at("attack") + " --out " + at("eval")), 0);
  const json e = io::read_json(root() / "eval" / "eval.json");
  EXPECT_TRUE(e.at("aggregate").contains("ao_fake"));
  EXPECT_TRUE(e.at("aggregate").contains("robustness_failures"));
  ASSERT_EQ(run("report --runs " + at("eval/eval.json") + " --out " + at("report")), 0);
  EXPECT_TRUE(fs::exists(root() / "report" / "report.txt"));
}

TEST_F(Pipeline, CleanAttackOmitsFakeMetrics) {
  ASSERT_EQ(run("attack --data " + at("data") + " --model " + at("pre/model") + " --out " + at("clean")), 0);
  ASSERT_EQ(run("eval --data " + at("data") + " --pred " + at("clean") + " --out " + at("clean_eval")), 0);
  EXPECT_FALSE(io::read_json(root() / "clean_eval" / "eval.json").at("aggregate").contains("ao_fake"));
}

TEST_F(Pipeline, MismatchedFakeTrajectoryIsRuntimeError) {
  const fs::path traj = root() / "short.txt";
  io::write_trajectory({Box{1, 1, 9, 9}, Box{1, 1, 9, 9}}, traj);
  EXPECT_EQ(run("--fake-traj file attack --data " + at("data") + " --model " + at("pre/model") +
                " --perturbation " + at("train/perturbation") + " --fake-traj-file " + traj.string() +
                " --out " + at("mismatch")),
            1);
}

TEST_F(Pipeline, MissingModelIsRuntimeError) {
  EXPECT_EQ(run("attack --data " + at("data") + " --model " + at("nope") + " --out " + at("nomodel")), 1);
}

TEST_F(Pipeline, InspectWritesImages) {
  ASSERT_EQ(run("inspect --perturbation " + at("train/perturbation") + " --out " + at("inspect")), 0);
  EXPECT_TRUE(fs::exists(root() / "inspect" / "delta.png"));
  EXPECT_TRUE(fs::exists(root() / "inspect" / "patch.png"));
}
